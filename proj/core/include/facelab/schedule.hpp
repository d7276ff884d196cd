#pragma once

#include <string>
#include <vector>

namespace facelab {

struct TrainSchedule {
  int total_epochs = 18;
  double base_lr = 0.1;
  // 0-indexed epochs at whose start the rate is multiplied by `decay`.
  std::vector<int> milestones{10, 13, 16};
  double decay = 0.1;
  int batch_size = 512;

  bool operator==(const TrainSchedule&) const = default;
};

// "msceleb18": 18 epochs, batch 512, lr 0.1, milestones 10/13/16.
// "sst250": 250 epochs, batch 512, lr 0.1, milestones 150/200/230.
TrainSchedule schedule_preset(const std::string& name);
const std::vector<std::string>& schedule_preset_names();

void validate_schedule(const TrainSchedule& schedule);

// base_lr * decay^(number of milestones <= epoch).
double lr_at(const TrainSchedule& schedule, int epoch);

}  // namespace facelab
