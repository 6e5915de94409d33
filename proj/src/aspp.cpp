#include "cafct/aspp.hpp"

namespace cafct {

int effective_receptive_field(int kernel, int dilation) {
  check_arg(kernel >= 1 && dilation >= 1, "effective_receptive_field: kernel and dilation must be >= 1");
  return dilation * (kernel - 1) + 1;
}

Aspp::Aspp(int channels, std::array<int, 3> rates, Rng& rng) : rates_(rates) {
  check_arg(rates[0] >= 1 && rates[0] < rates[1] && rates[1] < rates[2],
            "aspp: dilation rates must be strictly increasing, got " + std::to_string(rates[0]) + "," +
                std::to_string(rates[1]) + "," + std::to_string(rates[2]));
  point_ = {Conv2d(channels, channels, 1, 1, 0, 1, false, rng), BatchNorm2d(channels)};
  for (int i = 0; i < 3; ++i) {
    dilated_[static_cast<size_t>(i)] = {Conv2d(channels, channels, 3, 1, rates[static_cast<size_t>(i)],
                                               rates[static_cast<size_t>(i)], false, rng),
                                        BatchNorm2d(channels)};
  }
  pool_ = {Conv2d(channels, channels, 1, 1, 0, 1, false, rng), BatchNorm2d(channels)};
  project_ = {Conv2d(5 * channels, channels, 1, 1, 0, 1, false, rng), BatchNorm2d(channels)};
}

Tensor Aspp::run_branch(Branch& b, const Tensor& x, bool training) {
  return ops::relu(b.bn.forward(b.conv.forward(x), training));
}

Tensor Aspp::forward(const Tensor& x, bool training) {
  const int h = x.dim(2), w = x.dim(3);
  std::vector<Tensor> branches;
  branches.push_back(run_branch(point_, x, training));
  for (auto& b : dilated_) branches.push_back(run_branch(b, x, training));
  branches.push_back(ops::bilinear_resize(run_branch(pool_, ops::global_avg_pool(x), training), h, w));
  return run_branch(project_, ops::concat(branches, 1), training);
}

void Aspp::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  point_.conv.visit_params(prefix + ".branch1.conv", fn);
  point_.bn.visit_params(prefix + ".branch1.bn", fn);
  for (size_t i = 0; i < dilated_.size(); ++i) {
    const std::string bp = prefix + ".branch" + std::to_string(i + 2);
    dilated_[i].conv.visit_params(bp + ".conv", fn);
    dilated_[i].bn.visit_params(bp + ".bn", fn);
  }
  pool_.conv.visit_params(prefix + ".pool.conv", fn);
  pool_.bn.visit_params(prefix + ".pool.bn", fn);
  project_.conv.visit_params(prefix + ".project.conv", fn);
  project_.bn.visit_params(prefix + ".project.bn", fn);
}

void Aspp::visit_buffers(const std::string& prefix, const ParamVisitor& fn) {
  point_.bn.visit_buffers(prefix + ".branch1.bn", fn);
  for (size_t i = 0; i < dilated_.size(); ++i) {
    dilated_[i].bn.visit_buffers(prefix + ".branch" + std::to_string(i + 2) + ".bn", fn);
  }
  pool_.bn.visit_buffers(prefix + ".pool.bn", fn);
  project_.bn.visit_buffers(prefix + ".project.bn", fn);
}

}  // namespace cafct
