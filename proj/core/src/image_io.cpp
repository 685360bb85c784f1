#include "dag/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>

#include "dag/errors.hpp"

namespace dag {
namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::filesystem::path& path) {
  std::string token;
  while (in) {
    int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  in >> token;
  if (token.empty()) fail(ErrorKind::Parse, "truncated netpbm header in " + path.string());
  return token;
}

int parse_header_int(std::istream& in, const std::filesystem::path& path) {
  const std::string token = next_token(in, path);
  try {
    size_t used = 0;
    int value = std::stoi(token, &used);
    if (used != token.size() || value <= 0) throw std::invalid_argument(token);
    return value;
  } catch (const std::exception&) {
    fail(ErrorKind::Parse, "bad netpbm header field '" + token + "' in " + path.string());
  }
}

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open image " + path.string());

  const std::string magic = next_token(in, path);
  const bool binary = magic == "P6" || magic == "P5";
  const bool gray = magic == "P5" || magic == "P2";
  if (magic != "P6" && magic != "P5" && magic != "P3" && magic != "P2") {
    fail(ErrorKind::Parse, "unsupported raster format '" + magic + "' in " + path.string() +
                               " (expected a netpbm P2/P3/P5/P6 file)");
  }
  const int width = parse_header_int(in, path);
  const int height = parse_header_int(in, path);
  const int maxval = parse_header_int(in, path);
  if (maxval > 255) fail(ErrorKind::Parse, "only 8-bit rasters are supported: " + path.string());

  const int channels = gray ? 1 : 3;
  const size_t count = static_cast<size_t>(width) * height * channels;
  std::vector<int> raw(count);
  if (binary) {
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> bytes(count);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
    if (static_cast<size_t>(in.gcount()) != count) {
      fail(ErrorKind::Parse, "truncated raster data in " + path.string());
    }
    std::copy(bytes.begin(), bytes.end(), raw.begin());
  } else {
    for (auto& v : raw) {
      if (!(in >> v)) fail(ErrorKind::Parse, "truncated raster data in " + path.string());
    }
  }

  Image image(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int src = gray ? 0 : c;
        const int v = raw[(static_cast<size_t>(y) * width + x) * channels + src];
        image.at(c, y, x) = static_cast<double>(v) / maxval;
      }
    }
  }
  return image;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write image " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(static_cast<size_t>(3) * image.width * image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) bytes.push_back(quantize(image.at(c, y, x)));
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_pgm(const std::filesystem::path& path, std::span<const double> values, int height,
               int width) {
  if (values.size() != static_cast<size_t>(height) * width) {
    fail(ErrorKind::Structural, "grayscale map size does not match its dimensions");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write image " + path.string());
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double span = values.empty() ? 0.0 : *hi - *lo;
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (double v : values) {
    const double unit = span > 0.0 ? (v - *lo) / span : 0.5;
    out.put(static_cast<char>(quantize(unit)));
  }
}

}  // namespace dag
