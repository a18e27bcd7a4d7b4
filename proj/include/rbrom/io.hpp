#pragma once

// Little-endian binary archives: 8-byte magic, u64/f64 fields, and a u64
// trailer holding the XOR of every 8-byte payload word after the magic.

#include "errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rbrom::io {

class BinaryWriter {
  public:
    explicit BinaryWriter(std::string_view magic) {
        if (magic.size() != 8) {
            throw ArchiveError("archive magic must be 8 bytes");
        }
        bytes_.assign(magic.begin(), magic.end());
    }

    void u64(std::uint64_t v) {
        checksum_ ^= v;
        for (int b = 0; b < 8; ++b) {
            bytes_.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
        }
    }

    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void f64s(std::span<const double> values) {
        for (double v : values) {
            f64(v);
        }
    }

    /// Appends the checksum trailer and returns the archive bytes.
    [[nodiscard]] std::string finish() && {
        const std::uint64_t sum = checksum_;
        for (int b = 0; b < 8; ++b) {
            bytes_.push_back(static_cast<char>((sum >> (8 * b)) & 0xffu));
        }
        return std::move(bytes_);
    }

  private:
    std::string bytes_;
    std::uint64_t checksum_ = 0;
};

class BinaryReader {
  public:
    /// Validates magic, length (multiple of 8) and checksum up front.
    BinaryReader(std::string bytes, std::string_view magic) : bytes_(std::move(bytes)) {
        if (bytes_.size() < 16 || bytes_.compare(0, 8, magic) != 0) {
            throw ArchiveError("archive header mismatch: expected magic '" + std::string(magic) + "'");
        }
        if (bytes_.size() % 8 != 0) {
            throw ArchiveError("archive length " + std::to_string(bytes_.size()) + " is not a multiple of 8");
        }
        std::uint64_t sum = 0;
        for (std::size_t pos = 8; pos + 8 < bytes_.size(); pos += 8) {
            sum ^= word(pos);
        }
        if (sum != word(bytes_.size() - 8)) {
            throw ArchiveError("archive checksum mismatch");
        }
        pos_ = 8;
        end_ = bytes_.size() - 8;
    }

    std::uint64_t u64() {
        if (pos_ + 8 > end_) {
            throw ArchiveError("archive truncated");
        }
        const std::uint64_t v = word(pos_);
        pos_ += 8;
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::vector<double> f64s(std::uint64_t count) {
        if (count > (end_ - pos_) / 8) {
            throw ArchiveError("archive truncated: expected " + std::to_string(count) + " values");
        }
        std::vector<double> v(count);
        for (auto& x : v) {
            x = f64();
        }
        return v;
    }

    void expect_end() const {
        if (pos_ != end_) {
            throw ArchiveError("archive has " + std::to_string(end_ - pos_) + " trailing bytes");
        }
    }

  private:
    [[nodiscard]] std::uint64_t word(std::size_t pos) const {
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos + b])) << (8 * b);
        }
        return v;
    }

    std::string bytes_;
    std::size_t pos_ = 0;
    std::size_t end_ = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ArchiveError("cannot open '" + path + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ArchiveError("cannot write '" + path + "'");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw ArchiveError("write to '" + path + "' failed");
    }
}

/// Checks that a count read from an archive header is plausible before allocating.
inline std::uint64_t checked_product(std::initializer_list<std::uint64_t> factors) {
    std::uint64_t p = 1;
    for (auto f : factors) {
        if (f != 0 && p > (std::uint64_t{1} << 40) / f) {
            throw ArchiveError("archive header sizes overflow");
        }
        p *= f;
    }
    return p;
}

} // namespace rbrom::io
