#pragma once

// Scenario change indicator (SCI): per-sub-duration mean squared frame
// difference, its per-modality normalization, and the surrogate cost.

#include "ipmc/core.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace ipmc {

/// Frames of one modality, stored frame-major: frame (h, l) occupies
/// [(h * L + l) * N, (h * L + l + 1) * N).
struct FrameSequence {
  int modality = 0;
  std::size_t frame_length = 0;  // N_m
  int num_subdurations = 0;      // H
  int frames_per_subduration = 0;  // L
  std::vector<float> data;

  FrameSequence() = default;
  FrameSequence(int m, std::size_t n, int h, int l)
      : modality(m), frame_length(n), num_subdurations(h), frames_per_subduration(l),
        data(n * static_cast<std::size_t>(h) * static_cast<std::size_t>(l), 0.0f) {}

  const float* frame(int h, int l) const {
    return data.data() + (static_cast<std::size_t>(h) * frames_per_subduration + l) * frame_length;
  }
  float* frame(int h, int l) {
    return data.data() + (static_cast<std::size_t>(h) * frames_per_subduration + l) * frame_length;
  }
};

inline void check_frames(const FrameSequence& fs) {
  const std::size_t expected =
      fs.frame_length * static_cast<std::size_t>(fs.num_subdurations) * static_cast<std::size_t>(fs.frames_per_subduration);
  if (fs.frame_length == 0 || fs.data.size() != expected)
    throw Error(ErrorKind::dimension, "dimension mismatch");
}

/// Mean squared difference between two frames of length n.
inline double frame_sq_diff(const float* x, const float* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

/// Raw SCI row for one modality. The predecessor of a sub-duration's first
/// frame is the last frame of the previous sub-duration; in the very first
/// sub-duration that term is skipped and the mean runs over L - 1 terms.
inline std::vector<double> sci(const FrameSequence& fs) {
  check_frames(fs);
  const int big_l = fs.frames_per_subduration;
  if (big_l < 2) throw Error(ErrorKind::invalid_argument, "SCI needs at least 2 frames per sub-duration");
  std::vector<double> q(fs.num_subdurations, 0.0);
  for (int h = 0; h < fs.num_subdurations; ++h) {
    double acc = 0.0;
    int terms = 0;
    for (int l = 0; l < big_l; ++l) {
      const float* prev = nullptr;
      if (l > 0) prev = fs.frame(h, l - 1);
      else if (h > 0) prev = fs.frame(h - 1, big_l - 1);
      if (prev == nullptr) continue;
      acc += frame_sq_diff(fs.frame(h, l), prev, fs.frame_length);
      ++terms;
    }
    q[h] = acc / terms;
  }
  return q;
}

/// Per-modality min-max normalization of an M x H SCI matrix.
struct NormalizedSci {
  Matrix q_norm;
  std::vector<int> constant_rows;  // rows mapped to all zeros
  std::vector<std::string> warnings;
};

inline NormalizedSci normalize_sci(const Matrix& q) {
  NormalizedSci out;
  out.q_norm = Matrix::Zero(q.rows(), q.cols());
  for (Eigen::Index m = 0; m < q.rows(); ++m) {
    const double lo = q.row(m).minCoeff();
    const double hi = q.row(m).maxCoeff();
    if (!(hi > lo)) {
      out.constant_rows.push_back(static_cast<int>(m));
      out.warnings.push_back("SCI row " + std::to_string(m) + " is constant; normalized to zeros");
      continue;
    }
    out.q_norm.row(m) = ((q.row(m).array() - lo) / (hi - lo)).cwiseMax(0.0).cwiseMin(1.0).matrix();
  }
  return out;
}

/// C0 = max over (m, h) of q^alpha / (d c).
inline double surrogate_cost(const Matrix& q_norm, const Matrix& d, const Matrix& c, double alpha) {
  if (q_norm.rows() != d.rows() || q_norm.cols() != d.cols() || q_norm.rows() != c.rows() ||
      q_norm.cols() != c.cols())
    throw Error(ErrorKind::dimension, "dimension mismatch");
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < q_norm.size(); ++i) {
    const double dv = d.data()[i], cv = c.data()[i];
    if (dv == 0.0 || cv == 0.0) throw Error(ErrorKind::invalid_argument, "division by zero ratio");
    worst = std::max(worst, std::pow(q_norm.data()[i], alpha) / (dv * cv));
  }
  return worst;
}

// Binary frame stream: "IPMCFRM1", then little-endian uint32 m, N, H, L,
// then N*H*L float32 values in frame-major order.
static_assert(std::endian::native == std::endian::little, "frame streams assume a little-endian host");
inline constexpr std::array<char, 8> kFrameMagic{'I', 'P', 'M', 'C', 'F', 'R', 'M', '1'};

inline void write_frames(std::ostream& os, const FrameSequence& fs) {
  check_frames(fs);
  os.write(kFrameMagic.data(), kFrameMagic.size());
  const std::uint32_t header[4] = {static_cast<std::uint32_t>(fs.modality), static_cast<std::uint32_t>(fs.frame_length),
                                   static_cast<std::uint32_t>(fs.num_subdurations),
                                   static_cast<std::uint32_t>(fs.frames_per_subduration)};
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  os.write(reinterpret_cast<const char*>(fs.data.data()), static_cast<std::streamsize>(fs.data.size() * sizeof(float)));
  if (!os) throw Error(ErrorKind::io, "failed to write frame stream");
}

inline FrameSequence read_frames(std::istream& is) {
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kFrameMagic) throw Error(ErrorKind::io, "not a frame stream (bad magic)");
  std::uint32_t header[4];
  is.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!is) throw Error(ErrorKind::io, "truncated frame stream header");
  if (header[1] == 0 || header[2] == 0 || header[3] == 0) throw Error(ErrorKind::io, "empty frame stream");
  FrameSequence fs(static_cast<int>(header[0]), header[1], static_cast<int>(header[2]), static_cast<int>(header[3]));
  is.read(reinterpret_cast<char*>(fs.data.data()), static_cast<std::streamsize>(fs.data.size() * sizeof(float)));
  if (is.gcount() != static_cast<std::streamsize>(fs.data.size() * sizeof(float)))
    throw Error(ErrorKind::io, "truncated frame stream");
  return fs;
}

}  // namespace ipmc
