#include "lam/train.hpp"

#include <cmath>

#include "lam/dataset.hpp"
#include "lam/rng.hpp"

namespace lam {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) raise(ErrorKind::config, "learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    raise(ErrorKind::config, "Adam betas must lie in (0, 1)");
  if (iterations < 0) raise(ErrorKind::config, "iterations must be >= 0");
  if (patch_size < 1 || minibatch < 1) raise(ErrorKind::config, "patch_size and minibatch must be >= 1");
  if (decay_every < 1) raise(ErrorKind::config, "decay_every must be >= 1");
}

AdamOptimizer::AdamOptimizer(double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void AdamOptimizer::step(std::span<Tensor*> params, std::span<const Eigen::ArrayXd> grads, double learning_rate) {
  if (params.size() != grads.size()) raise(ErrorKind::contract, "Adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (Tensor* p : params) {
      m_.push_back(Eigen::ArrayXd::Zero(p->size()));
      v_.push_back(Eigen::ArrayXd::Zero(p->size()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].square();
    const Eigen::ArrayXd update = learning_rate * (m_[i] / c1) / ((v_[i] / c2).sqrt() + epsilon_);
    params[i]->data() = (params[i]->data().cast<double>() - update).cast<float>();
  }
}

SRNetwork train_tiny(SRNetwork net, std::span<const Tensor> hr_images, const TrainConfig& cfg,
                     std::vector<double>* loss_trace) {
  cfg.validate();
  if (net.kind() == NetworkKind::linear_upsampler)
    raise(ErrorKind::config, "the linear upsampler has fixed weights and cannot be trained");
  if (hr_images.empty()) raise(ErrorKind::data, "no training images");
  const int s = net.scale();
  const int hr_patch = s * cfg.patch_size;

  std::vector<Tensor> hr;
  std::vector<Tensor> lr;
  for (std::size_t i = 0; i < hr_images.size(); ++i) {
    const Tensor& img = hr_images[i];
    require_image(img, "training image");
    if (img.dim(1) < hr_patch || img.dim(2) < hr_patch)
      raise(ErrorKind::data, "training image " + std::to_string(i) + " is smaller than the " +
                                 std::to_string(hr_patch) + "px crop");
    Tensor aligned = crop_image(img, 0, 0, img.dim(1) / s * s, img.dim(2) / s * s);
    lr.push_back(downsample(aligned, s));
    hr.push_back(std::move(aligned));
  }
  if (cfg.iterations == 0) return net;

  Rng rng(cfg.seed);
  AdamOptimizer adam(cfg.beta1, cfg.beta2, cfg.epsilon);
  std::vector<Tensor*> params;
  for (auto& w : net.weights()) params.push_back(&w.tensor);

  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<Eigen::ArrayXd> grads;
    for (Tensor* p : params) grads.push_back(Eigen::ArrayXd::Zero(p->size()));
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.minibatch; ++b) {
      const std::size_t idx = rng.below(hr.size());
      const Tensor& lr_img = lr[idx];
      const int ly = static_cast<int>(rng.below(static_cast<std::uint64_t>(lr_img.dim(1) - cfg.patch_size + 1)));
      const int lx = static_cast<int>(rng.below(static_cast<std::uint64_t>(lr_img.dim(2) - cfg.patch_size + 1)));

      Graph<float> graph;
      const auto bound = net.bind(graph, true);
      auto input = graph.constant(crop_image(lr_img, ly, lx, cfg.patch_size, cfg.patch_size));
      auto target = graph.constant(crop_image(hr[idx], ly * s, lx * s, hr_patch, hr_patch));
      auto sr = net.forward(graph, input, std::span<const Var<float>>(bound));
      auto loss = mean(abs(sr - target));
      batch_loss += loss.value()[0];
      graph.backward(loss, 1.0f / static_cast<float>(cfg.minibatch));
      for (std::size_t k = 0; k < params.size(); ++k) grads[k] += graph.grad(bound[k]).cast<double>();
    }
    const double rate = cfg.learning_rate * std::pow(cfg.decay_factor, it / cfg.decay_every);
    adam.step(params, grads, rate);
    if (loss_trace) loss_trace->push_back(batch_loss / cfg.minibatch);
  }
  net.validate();
  return net;
}

double evaluate_l1(const SRNetwork& net, std::span<const Tensor> hr_images) {
  if (hr_images.empty()) raise(ErrorKind::data, "no evaluation images");
  const int s = net.scale();
  double total = 0.0;
  for (const Tensor& img : hr_images) {
    Tensor aligned = crop_image(img, 0, 0, img.dim(1) / s * s, img.dim(2) / s * s);
    const Tensor sr = net.infer(downsample(aligned, s));
    total += (sr.data() - aligned.data()).abs().cast<double>().mean();
  }
  return total / static_cast<double>(hr_images.size());
}

}  // namespace lam
