#include "banknet/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace bnk {

namespace {

// Reads one PPM header token, skipping whitespace and '#' comment lines.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int parse_dim(const std::string& tok, const std::filesystem::path& path) {
  try {
    const int v = std::stoi(tok);
    if (v <= 0) throw std::out_of_range("non-positive");
    return v;
  } catch (const std::exception&) {
    throw DataError("bad PPM header field '" + tok + "' in " + path.string());
  }
}

}  // namespace

ImageU8 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  if (next_token(in) != "P6") throw DataError(path.string() + " is not a binary PPM (P6)");
  ImageU8 img;
  img.w = parse_dim(next_token(in), path);
  img.h = parse_dim(next_token(in), path);
  const int maxval = parse_dim(next_token(in), path);
  if (maxval != 255) {
    throw DataError(path.string() + " has unsupported maxval " + std::to_string(maxval));
  }
  img.data.resize(static_cast<std::size_t>(img.h) * img.w * 3);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size())) {
    throw DataError(path.string() + " is truncated");
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const ImageU8& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P6\n" << image.w << " " << image.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data.data()),
            static_cast<std::streamsize>(image.data.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

Tensor decode_to_unit(const ImageU8& image) {
  Tensor t({image.h, image.w, 3});
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    t[i] = static_cast<double>(image.data[i]) / 255.0;
  }
  return t;
}

ImageU8 encode_from_unit(const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ShapeError("expected HxWx3 image tensor, got " + image.shape_str());
  }
  ImageU8 img;
  img.h = image.dim(0);
  img.w = image.dim(1);
  img.data.resize(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(image[i], 0.0, 1.0);
    img.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w) {
  if (image.rank() != 3) throw ShapeError("resize expects HxWxC, got " + image.shape_str());
  if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be positive");
  const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  Tensor out({out_h, out_w, c});
  for (int y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double ty = fy - y0;
    const int y0c = std::clamp(y0, 0, h - 1);
    const int y1c = std::clamp(y0 + 1, 0, h - 1);
    for (int x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double tx = fx - x0;
      const int x0c = std::clamp(x0, 0, w - 1);
      const int x1c = std::clamp(x0 + 1, 0, w - 1);
      for (int ci = 0; ci < c; ++ci) {
        const double top =
            image.at(y0c, x0c, ci) * (1.0 - tx) + image.at(y0c, x1c, ci) * tx;
        const double bot =
            image.at(y1c, x0c, ci) * (1.0 - tx) + image.at(y1c, x1c, ci) * tx;
        out.at(y, x, ci) = top * (1.0 - ty) + bot * ty;
      }
    }
  }
  return out;
}

}  // namespace bnk
