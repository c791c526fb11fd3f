#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "clap/common.hpp"
#include "clap/sensors.hpp"

namespace clap {

// Fixed shortest-round-trip formatting so logs and exports are byte-stable.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot open for writing: ", path);
  out << content;
  check(out.good(), "write failed: ", path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open: ", path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

// ASCII PLY; one optional extra scalar column (curvature weight heatmaps).
inline void write_ply(const std::string& path, const PointCloud& cloud,
                      const std::vector<double>* extra = nullptr,
                      const std::string& extra_name = "weight") {
  check(!extra || static_cast<int64_t>(extra->size()) == cloud.size(),
        "write_ply: extra column size mismatch");
  std::string s;
  s += "ply\nformat ascii 1.0\n";
  s += "element vertex " + std::to_string(cloud.size()) + "\n";
  s += "property double x\nproperty double y\nproperty double z\nproperty double intensity\n";
  if (extra) s += "property double " + extra_name + "\n";
  s += "end_header\n";
  for (int64_t i = 0; i < cloud.size(); ++i) {
    const double* r = cloud.points.data() + i * cloud.row_width();
    s += format_double(r[0]) + " " + format_double(r[1]) + " " + format_double(r[2]) + " " +
         format_double(r[3]);
    if (extra) s += " " + format_double((*extra)[static_cast<size_t>(i)]);
    s += "\n";
  }
  write_text_file(path, s);
}

// Binary PPM (P6), 8 bits per channel.
inline void write_ppm(const std::string& path, int width, int height,
                      const std::vector<double>& rgb) {
  check(static_cast<int64_t>(rgb.size()) == static_cast<int64_t>(width) * height * 3,
        "write_ppm: buffer size mismatch");
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot open for writing: ", path);
  out << "P6\n" << width << " " << height << "\n255\n";
  for (double v : rgb) {
    double c = v < 0 ? 0 : (v > 1 ? 1 : v);
    out.put(static_cast<char>(static_cast<int>(c * 255.0 + 0.5)));
  }
  check(out.good(), "write failed: ", path);
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::string s;
  for (size_t i = 0; i < header.size(); ++i) s += (i ? "," : "") + header[i];
  s += "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + format_double(row[i]);
    s += "\n";
  }
  write_text_file(path, s);
}

// Image ground-truth channels: one row per pixel.
inline void write_frame_gt_csv(const std::string& path, const CameraFrame& frame) {
  std::string s = "row,col,depth,primitive_id\n";
  for (int r = 0; r < frame.height; ++r)
    for (int c = 0; c < frame.width; ++c) {
      size_t idx = static_cast<size_t>(frame.pixel(r, c));
      s += std::to_string(r) + "," + std::to_string(c) + "," + format_double(frame.depth[idx]) +
           "," + std::to_string(frame.primitive_id[idx]) + "\n";
    }
  write_text_file(path, s);
}

inline void write_cloud_gt_csv(const std::string& path, const PointCloud& cloud) {
  std::string s = "index,primitive_id,nx,ny,nz,curvature\n";
  for (int64_t i = 0; i < cloud.size(); ++i) {
    size_t si = static_cast<size_t>(i);
    s += std::to_string(i) + "," + std::to_string(cloud.primitive_id[si]) + "," +
         format_double(cloud.gt_normal[si].x()) + "," + format_double(cloud.gt_normal[si].y()) +
         "," + format_double(cloud.gt_normal[si].z()) + "," +
         format_double(cloud.gt_curvature[si]) + "\n";
  }
  write_text_file(path, s);
}

inline void append_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  check(out.good(), "cannot open for append: ", path);
  out << content;
  check(out.good(), "append failed: ", path);
}

}  // namespace clap
