#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lam/network.hpp"

namespace lam {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int iterations = 1000;
  int patch_size = 32;  // LR side length of each training crop
  int minibatch = 16;
  std::uint64_t seed = 0;
  int decay_every = 200000;  // learning rate is multiplied by decay_factor this often
  double decay_factor = 0.5;

  void validate() const;
};

/// Adam with bias correction. Moments are kept in double.
class AdamOptimizer {
 public:
  AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  void step(std::span<Tensor*> params, std::span<const Eigen::ArrayXd> grads, double learning_rate);
  int steps() const noexcept { return t_; }

 private:
  double beta1_, beta2_, epsilon_;
  int t_ = 0;
  std::vector<Eigen::ArrayXd> m_, v_;
};

/// L1 training on random crops: LR crops come from the bicubic-downsampled
/// HR images, targets are the aligned HR crops. Deterministic given cfg.seed.
/// When `loss_trace` is given, the minibatch loss of every iteration is appended.
SRNetwork train_tiny(SRNetwork net, std::span<const Tensor> hr_images, const TrainConfig& cfg,
                     std::vector<double>* loss_trace = nullptr);

/// Mean absolute error between net(downsample(hr)) and hr over whole images.
double evaluate_l1(const SRNetwork& net, std::span<const Tensor> hr_images);

}  // namespace lam
