#include "featalign/learning.hpp"

#include <algorithm>
#include <thread>

namespace featalign {

ThetaGradient theta_gradient(const TrainSample& sample, const SolverConfig& config,
                             const DampingParams& damping_params) {
  ThetaGradient out;
  const int L = static_cast<int>(damping_params.theta.size());
  out.per_level.assign(L, Vec6::Zero());
  for (int l = 0; l < L; ++l) {
    for (int j = 0; j < 6; ++j) {
      auto dp = damping_params.cast<Dual>();
      dp.theta[l][j].d = 1.0;
      int near_boundary = 0;
      const auto report = sample_loss<Dual>(sample, config, dp, &near_boundary);
      out.per_level[l][j] = report.total.d;
      out.loss = report.total.v;
      out.n_near_boundary = std::max(out.n_near_boundary, near_boundary);
    }
  }
  return out;
}

namespace {

double mean_loss(const std::vector<TrainSample>& samples, const SolverConfig& config,
                 const DampingParams& params) {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : samples) {
    try {
      sum += sample_loss<double>(s, config, params).total;
    } catch (const Error&) {
      sum += kLossClamp;
    }
  }
  return sum / double(samples.size());
}

}  // namespace

FitResult fit_damping(const std::vector<TrainSample>& samples,
                      const std::vector<TrainSample>& val_samples,
                      const SolverConfig& config, const DampingParams& init_theta,
                      double lr, int steps, int threads) {
  FitResult result;
  result.params = init_theta;
  if (samples.empty()) return result;
  const int L = static_cast<int>(init_theta.theta.size());
  const int n_threads = std::max(1, threads);

  for (int step = 0; step < steps; ++step) {
    std::vector<std::vector<Vec6>> grads(samples.size());
    std::vector<double> losses(samples.size(), 0.0);
    const auto worker = [&](size_t begin, size_t end) {
      for (size_t i = begin; i < end; ++i) {
        try {
          const auto g = theta_gradient(samples[i], config, result.params);
          grads[i] = g.per_level;
          losses[i] = g.loss;
        } catch (const Error&) {
          grads[i].assign(L, Vec6::Zero());
          losses[i] = kLossClamp;
        }
      }
    };
    if (n_threads == 1) {
      worker(0, samples.size());
    } else {
      std::vector<std::thread> pool;
      const size_t chunk = (samples.size() + n_threads - 1) / n_threads;
      for (int t = 0; t < n_threads; ++t) {
        const size_t begin = t * chunk;
        const size_t end = std::min(samples.size(), begin + chunk);
        if (begin >= end) break;
        pool.emplace_back(worker, begin, end);
      }
      for (auto& th : pool) th.join();
    }

    std::vector<Vec6> mean_grad(L, Vec6::Zero());
    double train_loss = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
      for (int l = 0; l < L; ++l) mean_grad[l] += grads[i][l];
      train_loss += losses[i];
    }
    train_loss /= double(samples.size());
    for (int l = 0; l < L; ++l) {
      mean_grad[l] /= double(samples.size());
      for (int j = 0; j < 6; ++j) {
        const double g = std::clamp(mean_grad[l][j], -1.0, 1.0);
        result.params.theta[l][j] -= lr * g;
      }
    }
    FitHistoryEntry entry;
    entry.step = step;
    entry.train_loss = train_loss;
    entry.val_loss = mean_loss(val_samples, config, result.params);
    result.history.push_back(entry);
  }
  return result;
}

}  // namespace featalign
