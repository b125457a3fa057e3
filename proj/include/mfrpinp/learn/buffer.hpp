#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <vector>

#include "mfrpinp/error.hpp"

namespace mfrpinp::learn {

/// Bounded FIFO. A push into a full buffer evicts the oldest element.
template <class T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw InvalidArgument("replay buffer capacity must be positive");
  }

  void push(T v) {
    if (data_.size() == capacity_) data_.pop_front();
    data_.push_back(std::move(v));
    ++inserted_;
  }

  std::size_t size() const noexcept { return data_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return data_.empty(); }
  std::uint64_t inserted() const noexcept { return inserted_; }
  /// 0 is the oldest element.
  const T& operator[](std::size_t i) const { return data_[i]; }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  /// Copy of elements [begin, begin + n).
  std::vector<T> window(std::size_t begin, std::size_t n) const {
    if (begin + n > data_.size()) throw InvalidArgument("window exceeds buffer");
    const auto first = data_.begin() + static_cast<std::ptrdiff_t>(begin);
    return std::vector<T>(first, first + static_cast<std::ptrdiff_t>(n));
  }

 private:
  std::size_t capacity_;
  std::deque<T> data_;
  std::uint64_t inserted_ = 0;
};

}  // namespace mfrpinp::learn
