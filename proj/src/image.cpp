#include "sanet/image.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace sanet {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : b_(bytes) {}

  std::size_t number(const char* what) {
    skip_space();
    std::size_t value = 0, digits = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(b_[pos_++] - '0');
      if (++digits > 9) throw FormatError(std::string("PPM ") + what + " is too large");
    }
    if (digits == 0) throw FormatError(std::string("PPM header: expected ") + what);
    return value;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  void skip_space() {
    while (pos_ < b_.size()) {
      const char c = b_[pos_];
      if (c == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& b_;
  std::size_t pos_ = 2;
};

}  // namespace

Image decode_ppm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("not a binary PPM (P6) image");
  HeaderReader r(bytes);
  const std::size_t w = r.number("width");
  const std::size_t h = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (w == 0 || h == 0) throw FormatError("PPM image has zero extent");
  if (maxval != 255) throw FormatError("only 8-bit PPM (maxval 255) is supported, got " + std::to_string(maxval));
  if (r.pos() >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[r.pos()]))) {
    throw FormatError("PPM header is not terminated by whitespace");
  }
  r.advance();
  const std::size_t need = w * h * 3;
  if (bytes.size() - r.pos() < need) {
    throw FormatError("PPM pixel data truncated: expected " + std::to_string(need) + " bytes, found " +
                      std::to_string(bytes.size() - r.pos()));
  }
  Image img(w, h);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos()), need, img.pixels.begin());
  return img;
}

std::string encode_ppm(const Image& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_ppm(const std::filesystem::path& path, const Image& image) { write_file(path, encode_ppm(image)); }

}  // namespace sanet
