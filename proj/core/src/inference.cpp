#include "osr/inference.hpp"

#include "osr/error.hpp"

namespace osr {

double inherent_threshold(int64_t num_classes, double alpha_hard, double epsilon) {
  if (num_classes < 2) fail(ErrorKind::Input, "inherent_threshold: need at least two classes");
  if (!(alpha_hard >= 0.0 && alpha_hard <= 1.0)) fail(ErrorKind::Input, "inherent_threshold: alpha_hard outside [0, 1]");
  const double tau = (1.0 - alpha_hard) + alpha_hard / static_cast<double>(num_classes);
  return tau + epsilon;
}

torch::Tensor predict_probs(GroupedNet& net, const torch::Tensor& x, int64_t batch_size) {
  torch::NoGradGuard no_grad;
  EvalModeGuard eval(*net);
  std::vector<torch::Tensor> chunks;
  for (int64_t start = 0; start < x.size(0); start += batch_size)
    chunks.push_back(net->forward(x.slice(0, start, std::min(start + batch_size, x.size(0))), BnBank::Real));
  if (chunks.empty()) return torch::zeros({0, net->num_classes()});
  return torch::cat(chunks);
}

std::vector<double> scores_from_probs(const torch::Tensor& probs) {
  if (probs.dim() != 2) fail(ErrorKind::Input, "scores_from_probs: expected [B, K]");
  auto max = std::get<0>(probs.max(1)).to(torch::kDouble).contiguous();
  return {max.data_ptr<double>(), max.data_ptr<double>() + max.numel()};
}

std::vector<double> score(GroupedNet& net, const torch::Tensor& x, int64_t batch_size) {
  return scores_from_probs(predict_probs(net, x, batch_size));
}

std::vector<OpenSetPrediction> predict_from_probs(const torch::Tensor& probs, double threshold) {
  if (probs.dim() != 2) fail(ErrorKind::Input, "predict_from_probs: expected [B, K]");
  const auto k = probs.size(1);
  auto [max, arg] = probs.max(1);
  max = max.to(torch::kDouble).contiguous();
  arg = arg.contiguous();
  std::vector<OpenSetPrediction> out(static_cast<size_t>(probs.size(0)));
  for (int64_t b = 0; b < probs.size(0); ++b) {
    auto& p = out[static_cast<size_t>(b)];
    p.confidence = max.data_ptr<double>()[b];
    p.label = p.confidence < threshold ? k : arg.data_ptr<int64_t>()[b];
    p.threshold_used = threshold;
  }
  return out;
}

std::vector<OpenSetPrediction> predict(GroupedNet& net, const torch::Tensor& x, double threshold, int64_t batch_size) {
  return predict_from_probs(predict_probs(net, x, batch_size), threshold);
}

}  // namespace osr
