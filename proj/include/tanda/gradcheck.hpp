#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tanda {

// Central-finite-difference check of the analytic gradients, in f64.
// Relative error per tensor is max over coordinates of
// |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
struct GradCheckConfig {
  int d_model = 8;
  int n_blocks = 1;
  int n_heads = 2;
  int vocab_size = 50;
  int batch_size = 2;
  int max_len = 16;
  double epsilon = 1e-3;
  uint64_t seed = 3;
  bool include_mlm = true;   // also checks the LM head path
  double init_sigma = 0.5;   // wider than the training init so layer norms
                             // sit in a smooth regime at d=8
};

struct GradCheckResult {
  struct Entry {
    std::string tensor;
    double max_rel_err;
    double analytic_at_worst = 0.0;  // g_a at the argmax coordinate
    double fd_at_worst = 0.0;        // g_fd at the argmax coordinate
    double l2_rel_err = 0.0;         // ||ga-gfd|| / max(1e-8, ||ga||+||gfd||)
    double analytic_l2 = 0.0;
  };
  std::vector<Entry> entries;
  double worst = 0.0;
  double seconds = 0.0;
  double loss_at_check = 0.0;

  std::string to_json() const;
};

GradCheckResult run_grad_check(const GradCheckConfig& cfg);

}  // namespace tanda
