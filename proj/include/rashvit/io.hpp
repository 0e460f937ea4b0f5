#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "rashvit/errors.hpp"

namespace rashvit {

// write-temp-then-rename, so readers never see partial files
inline void write_text_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc | std::ios::binary);
        if (!f) throw DataError("cannot write " + tmp);
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace rashvit
