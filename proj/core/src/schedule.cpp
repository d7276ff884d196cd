#include "facelab/schedule.hpp"

#include <cmath>

#include "facelab/error.hpp"

namespace facelab {

TrainSchedule schedule_preset(const std::string& name) {
  if (name == "msceleb18") return TrainSchedule{18, 0.1, {10, 13, 16}, 0.1, 512};
  if (name == "sst250") return TrainSchedule{250, 0.1, {150, 200, 230}, 0.1, 512};
  throw LookupError("unknown schedule preset '" + name + "' (valid: msceleb18, sst250)");
}

const std::vector<std::string>& schedule_preset_names() {
  static const std::vector<std::string> names{"msceleb18", "sst250"};
  return names;
}

void validate_schedule(const TrainSchedule& s) {
  if (s.total_epochs < 1) throw ValueError("schedule: total_epochs must be >= 1");
  if (!(s.base_lr > 0)) throw ValueError("schedule: base_lr must be > 0");
  if (!(s.decay > 0)) throw ValueError("schedule: decay must be > 0");
  if (s.batch_size < 1) throw ValueError("schedule: batch_size must be >= 1");
  for (std::size_t i = 0; i < s.milestones.size(); ++i) {
    if (s.milestones[i] < 0 || s.milestones[i] >= s.total_epochs) {
      throw ValueError("schedule: milestone " + std::to_string(s.milestones[i]) +
                       " outside [0, total_epochs)");
    }
    if (i > 0 && s.milestones[i] <= s.milestones[i - 1]) {
      throw ValueError("schedule: milestones must be strictly increasing");
    }
  }
}

double lr_at(const TrainSchedule& s, int epoch) {
  if (epoch < 0 || epoch >= s.total_epochs) {
    throw ValueError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                     std::to_string(s.total_epochs) + ")");
  }
  double lr = s.base_lr;
  for (int m : s.milestones) {
    if (m <= epoch) lr *= s.decay;
  }
  return lr;
}

}  // namespace facelab
