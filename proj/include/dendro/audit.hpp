#pragma once

// Leakage instrumentation. While a ScopedAudit is active on a thread, every
// dataset handed to a hierarchy-extraction or training entry point is checked
// against the fold's forbidden (test) rows via the slice provenance.

#include <atomic>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "dendro/dataset.hpp"

namespace dendro::audit {

class FoldAudit {
 public:
  FoldAudit(std::size_t total_rows, std::span<const std::size_t> forbidden_rows) : forbidden_(total_rows, 0) {
    for (auto r : forbidden_rows)
      if (r < total_rows) forbidden_[r] = 1;
  }

  void record(const Dataset& ds, std::string_view phase) {
    touches_.fetch_add(1, std::memory_order_relaxed);
    std::size_t bad = 0;
    for (auto r : ds.origin)
      if (r < forbidden_.size() && forbidden_[r]) ++bad;
    if (ds.role == SliceRole::test) bad = std::max<std::size_t>(bad, 1);
    if (bad) {
      violations_.fetch_add(bad, std::memory_order_relaxed);
      std::lock_guard lock(mu_);
      phases_.emplace_back(phase);
    }
  }

  std::size_t touches() const { return touches_.load(); }
  std::size_t violations() const { return violations_.load(); }
  std::vector<std::string> violating_phases() const {
    std::lock_guard lock(mu_);
    return phases_;
  }

 private:
  std::vector<char> forbidden_;
  std::atomic<std::size_t> touches_{0};
  std::atomic<std::size_t> violations_{0};
  mutable std::mutex mu_;
  std::vector<std::string> phases_;
};

namespace detail {
inline FoldAudit*& current() {
  thread_local FoldAudit* active = nullptr;
  return active;
}
}  // namespace detail

class ScopedAudit {
 public:
  explicit ScopedAudit(FoldAudit* audit) : prev_(detail::current()) { detail::current() = audit; }
  ~ScopedAudit() { detail::current() = prev_; }
  ScopedAudit(const ScopedAudit&) = delete;
  ScopedAudit& operator=(const ScopedAudit&) = delete;

 private:
  FoldAudit* prev_;
};

/// Called by every entry point that consumes data for extraction or tuning.
inline void touch(const Dataset& ds, std::string_view phase) {
  if (auto* a = detail::current()) a->record(ds, phase);
}

}  // namespace dendro::audit
