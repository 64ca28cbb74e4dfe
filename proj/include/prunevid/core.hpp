#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace prunevid {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Dense row-major float matrix. Rows are exposed as spans.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw InvalidArgument("matrix data length does not match shape");
    }
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  [[nodiscard]] std::span<const float> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  [[nodiscard]] const std::vector<float>& data() const noexcept { return data_; }
  std::vector<float>& data() noexcept { return data_; }

  void append_row(std::span<const float> values) {
    if (values.size() != cols_) throw InvalidArgument("row width mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  /// Copies the listed rows, in the given order.
  [[nodiscard]] Matrix select_rows(std::span<const std::size_t> indices) const {
    Matrix out(0, cols_);
    out.data_.reserve(indices.size() * cols_);
    for (auto r : indices) {
      if (r >= rows_) throw InvalidArgument("row index out of range");
      out.append_row(row(r));
    }
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// Visual tokens of a video: `frames` x `tokens_per_frame` x `channels`,
/// frame-major then spatial-location-major.
class TokenGrid {
 public:
  TokenGrid(std::size_t frames, std::size_t tokens_per_frame, std::size_t channels,
            std::vector<float> data)
      : frames_(frames), tokens_(tokens_per_frame), channels_(channels), data_(std::move(data)) {
    if (frames_ == 0 || tokens_ == 0 || channels_ == 0) {
      throw InvalidArgument("token grid dimensions must be positive");
    }
    if (data_.size() != frames_ * tokens_ * channels_) {
      throw InvalidArgument("token grid data length does not match T*N_v*C");
    }
    for (float v : data_) {
      if (!std::isfinite(v)) throw InvalidArgument("token grid contains a non-finite value");
    }
  }

  [[nodiscard]] std::size_t frames() const noexcept { return frames_; }
  [[nodiscard]] std::size_t tokens_per_frame() const noexcept { return tokens_; }
  [[nodiscard]] std::size_t channels() const noexcept { return channels_; }
  [[nodiscard]] std::size_t token_count() const noexcept { return frames_ * tokens_; }

  [[nodiscard]] std::span<const float> token(std::size_t frame, std::size_t location) const noexcept {
    return {data_.data() + (frame * tokens_ + location) * channels_, channels_};
  }
  [[nodiscard]] const std::vector<float>& data() const noexcept { return data_; }

  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;

 private:
  std::size_t frames_;
  std::size_t tokens_;
  std::size_t channels_;
  std::vector<float> data_;
};

struct PruneConfig {
  double tau = 0.8;    // static-token similarity threshold
  double gamma = 0.25; // temporal segments per frame
  double beta = 0.5;   // spatial clusters per token
  double alpha = 0.4;  // fraction of merged tokens kept at layer M
  std::size_t m_layer = 10;
  std::size_t k_knn = 5;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument. `layers` is the attached model depth, 0 to skip that check.
  void validate(std::size_t layers = 0) const {
    // tau above 1 is allowed: it marks every multi-frame location dynamic.
    if (!std::isfinite(tau)) throw InvalidArgument("tau must be finite");
    auto ratio_ok = [](double r) { return std::isfinite(r) && r > 0.0 && r <= 1.0; };
    if (!ratio_ok(gamma)) throw InvalidArgument("gamma must be in (0, 1]");
    if (!ratio_ok(beta)) throw InvalidArgument("beta must be in (0, 1]");
    if (!ratio_ok(alpha)) throw InvalidArgument("alpha must be in (0, 1]");
    if (k_knn < 1) throw InvalidArgument("k_knn must be >= 1");
    if (m_layer < 1) throw InvalidArgument("m_layer is 1-based and must be >= 1");
    if (layers != 0 && m_layer >= layers) {
      throw InvalidArgument("m_layer must be smaller than the model depth");
    }
  }
};

enum class MergeKind { static_merged, dynamic_merged };

inline const char* to_string(MergeKind kind) noexcept {
  return kind == MergeKind::static_merged ? "static" : "dynamic";
}

/// Original (frame, location) cells averaged into one merged token.
struct Provenance {
  std::size_t segment_id = 0;
  std::vector<std::size_t> source_frames;
  std::vector<std::size_t> source_locations;
  MergeKind kind = MergeKind::dynamic_merged;

  [[nodiscard]] std::size_t member_count() const noexcept {
    return source_frames.size() * source_locations.size();
  }
};

/// Half away from zero, the rounding used wherever a ratio yields a count.
inline std::size_t round_count(double x) { return static_cast<std::size_t>(std::llround(x)); }

/// max(1, round(ratio * n))
inline std::size_t ratio_count(double ratio, std::size_t n) {
  const auto c = round_count(ratio * static_cast<double>(n));
  return c < 1 ? 1 : c;
}

}  // namespace prunevid
