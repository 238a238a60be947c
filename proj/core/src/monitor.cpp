#include <limits>
#include <numeric>

#include "ld/distill.hpp"
#include "ld/errors.hpp"

namespace ld {

ResetMonitor::ResetMonitor(std::size_t window, std::size_t patience)
    : window_(window), patience_(patience), best_(-std::numeric_limits<double>::infinity()) {
  if (window == 0) throw ArgumentError("monitor: moving-average window must be at least 1");
  if (patience == 0) throw ArgumentError("monitor: patience must be at least 1");
}

bool ResetMonitor::update(double accuracy) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw ArgumentError("monitor: accuracy outside [0, 1]");
  recent_.push_back(accuracy);
  if (recent_.size() > window_) recent_.pop_front();
  const double avg = moving_average();
  if (avg > best_) {
    best_ = avg;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return since_best_ >= patience_;
}

void ResetMonitor::clear() {
  recent_.clear();
  best_ = -std::numeric_limits<double>::infinity();
  since_best_ = 0;
}

double ResetMonitor::moving_average() const {
  if (recent_.empty()) return 0.0;
  return std::accumulate(recent_.begin(), recent_.end(), 0.0) / static_cast<double>(recent_.size());
}

}  // namespace ld
