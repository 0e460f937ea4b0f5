#include "rashvit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace rashvit::svg {

namespace {

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string render_accuracy_plot(const std::vector<Series>& series, const std::string& title) {
    const double w = 640, h = 420, ml = 60, mr = 20, mt = 40, mb = 50;
    double xmin = 1e300, xmax = -1e300;
    for (const auto& s : series)
        for (double x : s.xs) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
        }
    if (xmin >= xmax) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - y * (h - mt - mb); };

    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(w) + "\" height=\"" + fmt(h) +
                      "\" viewBox=\"0 0 " + fmt(w) + " " + fmt(h) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + fmt(w / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"16\">" + title + "</text>\n";
    // axes
    out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(h - mb) + "\" x2=\"" + fmt(w - mr) + "\" y2=\"" +
           fmt(h - mb) + "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(ml) + "\" y2=\"" + fmt(h - mb) +
           "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        double y = i / 5.0;
        out += "<line x1=\"" + fmt(ml - 4) + "\" y1=\"" + fmt(py(y)) + "\" x2=\"" + fmt(ml) + "\" y2=\"" +
               fmt(py(y)) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + fmt(ml - 8) + "\" y=\"" + fmt(py(y) + 4) + "\" text-anchor=\"end\" "
               "font-family=\"sans-serif\" font-size=\"11\">" + fmt(y) + "</text>\n";
    }
    int xticks = 10;
    for (int i = 0; i <= xticks; ++i) {
        double x = xmin + (xmax - xmin) * i / xticks;
        out += "<line x1=\"" + fmt(px(x)) + "\" y1=\"" + fmt(h - mb) + "\" x2=\"" + fmt(px(x)) + "\" y2=\"" +
               fmt(h - mb + 4) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + fmt(px(x)) + "\" y=\"" + fmt(h - mb + 18) + "\" text-anchor=\"middle\" "
               "font-family=\"sans-serif\" font-size=\"11\">" + fmt(x) + "</text>\n";
    }
    out += "<text x=\"" + fmt(w / 2) + "\" y=\"" + fmt(h - 10) + "\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"12\">SNR (dB)</text>\n";
    out += "<text x=\"16\" y=\"" + fmt(h / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\" transform=\"rotate(-90 16 " + fmt(h / 2) + ")\">accuracy</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % 6];
        std::string pts;
        for (size_t i = 0; i < s.xs.size(); ++i) pts += fmt(px(s.xs[i])) + "," + fmt(py(s.ys[i])) + " ";
        out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts +
               "\"/>\n";
        for (size_t i = 0; i < s.xs.size(); ++i)
            out += "<circle cx=\"" + fmt(px(s.xs[i])) + "\" cy=\"" + fmt(py(s.ys[i])) + "\" r=\"3\" fill=\"" +
                   color + "\"/>\n";
        out += "<text x=\"" + fmt(w - mr - 4) + "\" y=\"" + fmt(mt + 16 * static_cast<double>(si) + 12) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" + color + "\">" +
               s.name + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

std::string render_confusion_heatmap(const std::vector<std::vector<int64_t>>& confusion,
                                     const std::vector<std::string>& class_names, const std::string& title) {
    size_t k = confusion.size();
    const double cell = 40, ml = 80, mt = 60;
    double w = ml + cell * static_cast<double>(k) + 20;
    double h = mt + cell * static_cast<double>(k) + 40;
    int64_t vmax = 1;
    for (const auto& row : confusion)
        for (int64_t v : row) vmax = std::max(vmax, v);

    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(w) + "\" height=\"" + fmt(h) +
                      "\" viewBox=\"0 0 " + fmt(w) + " " + fmt(h) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + fmt(w / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"16\">" + title + "</text>\n";
    for (size_t r = 0; r < k; ++r) {
        for (size_t c = 0; c < k; ++c) {
            double frac = static_cast<double>(confusion[r][c]) / static_cast<double>(vmax);
            int blue = static_cast<int>(255 - 205 * frac);
            int rg = static_cast<int>(255 - 235 * frac);
            char color[16];
            std::snprintf(color, sizeof(color), "#%02x%02x%02x", rg, rg, blue);
            double x = ml + cell * static_cast<double>(c), y = mt + cell * static_cast<double>(r);
            out += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(cell) + "\" height=\"" +
                   fmt(cell) + "\" fill=\"" + color + "\" stroke=\"#ccc\"/>\n";
            const char* text_fill = frac > 0.55 ? "white" : "black";
            out += "<text x=\"" + fmt(x + cell / 2) + "\" y=\"" + fmt(y + cell / 2 + 4) +
                   "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + text_fill +
                   "\">" + std::to_string(confusion[r][c]) + "</text>\n";
        }
        std::string name = r < class_names.size() ? class_names[r] : std::to_string(r);
        out += "<text x=\"" + fmt(ml - 6) + "\" y=\"" + fmt(mt + cell * static_cast<double>(r) + cell / 2 + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" + name + "</text>\n";
        out += "<text x=\"" + fmt(ml + cell * static_cast<double>(r) + cell / 2) + "\" y=\"" + fmt(mt - 8) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
               (r < class_names.size() ? class_names[r] : std::to_string(r)) + "</text>\n";
    }
    out += "<text x=\"" + fmt(ml - 50) + "\" y=\"" + fmt(mt + cell * static_cast<double>(k) / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 " +
           fmt(ml - 50) + " " + fmt(mt + cell * static_cast<double>(k) / 2) + ")\">true label</text>\n";
    out += "<text x=\"" + fmt(ml + cell * static_cast<double>(k) / 2) + "\" y=\"" + fmt(h - 10) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">predicted label</text>\n";
    out += "</svg>\n";
    return out;
}

}  // namespace rashvit::svg
