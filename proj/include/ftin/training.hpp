#pragma once

// Minibatch training with adaptive moments, reduce-on-plateau learning-rate
// decay and early stopping once the learning rate falls below a floor.

#include "ftin/imu_data.hpp"
#include "ftin/model.hpp"

#include <chrono>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <thread>

namespace ftin {

struct TrainConfig {
  int batch_size = 512;
  int max_epochs = 100;
  double lr_init = 1e-4;
  double lr_floor = 1e-6;
  int plateau_patience = 10;
  double lr_decay_factor = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int threads = 1;
};

inline void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
  if (c.max_epochs < 1) throw ValidationError("train config: max_epochs must be >= 1");
  if (!(c.lr_init > 0.0)) throw ValidationError("train config: lr_init must be > 0");
  if (!(c.lr_floor < c.lr_init)) throw ValidationError("train config: lr_floor must be < lr_init");
  if (!(c.lr_decay_factor > 0.0 && c.lr_decay_factor < 1.0)) throw ValidationError("train config: lr_decay_factor must be in (0, 1)");
  if (c.plateau_patience < 1) throw ValidationError("train config: plateau_patience must be >= 1");
  if (c.threads < 1) throw ValidationError("train config: threads must be >= 1");
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double wall_time_s = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

// Mean over all 2N scalar entries of the squared difference.
template <class T>
T mse_loss(const Mat<T>& pred, const Mat<T>& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), "mse_loss: shape mismatch");
  if (pred.size() == 0) throw SizeError("mse_loss: empty batch");
  return (pred - target).squaredNorm() / static_cast<T>(pred.size());
}

// Reduce-on-plateau: after `patience` consecutive epochs without a strict
// improvement of the monitored loss, lr <- lr * factor.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, double factor, int patience, double floor)
      : lr_(lr), factor_(factor), floor_(floor), patience_(patience) {}

  // Returns true when `loss` is a new best.
  bool observe(double loss) {
    if (loss < best_) {
      best_ = loss;
      since_ = 0;
      return true;
    }
    if (++since_ >= patience_) {
      lr_ *= factor_;
      since_ = 0;
    }
    return false;
  }

  // The relative slack keeps lr == floor (up to rounding of repeated
  // multiplication) from counting as "below".
  bool exhausted() const { return lr_ < floor_ * (1.0 - 1e-9); }

  double lr() const { return lr_; }
  double best() const { return best_; }
  int since_improvement() const { return since_; }

  void restore(double lr, double best, int since) {
    lr_ = lr;
    best_ = best;
    since_ = since;
  }

 private:
  double lr_, factor_, floor_;
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int since_ = 0;
};

template <class T>
struct AdamState {
  FtinParams<T> m, v;
  std::int64_t step = 0;
};

template <class T>
void adam_step(FtinParams<T>& params, const FtinParams<T>& grads, AdamState<T>& st, const TrainConfig& cfg, double lr) {
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.adam_eps);
  auto p = nn::tensor_views(params);
  auto g = nn::tensor_views(grads);
  auto m = nn::tensor_views(st.m);
  auto v = nn::tensor_views(st.v);
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (Index i = 0; i < p[k].size(); ++i) {
      const T gi = g[k].data[i];
      T& mi = m[k].data[i];
      T& vi = v[k].data[i];
      mi = b1 * mi + (T(1) - b1) * gi;
      vi = b2 * vi + (T(1) - b2) * gi * gi;
      p[k].data[i] -= step_size * mi / (std::sqrt(vi) * inv_sqrt_bc2 + eps);
    }
  }
}

// Everything needed to continue a run exactly where it stopped.
template <class T>
struct TrainState {
  FtinParams<T> params;
  FtinParams<T> best;
  AdamState<T> adam;
  int next_epoch = 0;
  double lr = 0.0;
  double best_val = std::numeric_limits<double>::infinity();
  int since_improvement = 0;
  bool finished = false;
  TrainHistory history;
};

template <class T>
struct TrainResult {
  FtinParams<T> params;  // best-validation parameters
  TrainHistory history;
};

template <class T>
struct TrainCallbacks {
  std::function<void(const TrainState<T>&)> on_epoch;
  std::function<void(const std::string&)> log;
};

namespace detail {

// Runs fn(begin, end, worker) over [0, n) split into contiguous chunks, one
// per worker; with one worker everything happens on the calling thread.
// The first exception raised by a worker (in worker order) is rethrown.
template <class F>
void parallel_chunks(std::size_t n, int workers, F&& fn) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (workers == 1) {
    fn(std::size_t{0}, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  const std::size_t chunk = (n + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
  for (int w = 0; w < workers; ++w) {
    const std::size_t b = std::min(n, static_cast<std::size_t>(w) * chunk);
    const std::size_t e = std::min(n, b + chunk);
    pool.emplace_back([&fn, &errors, b, e, w] {
      try {
        fn(b, e, w);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

template <class T>
Mat<T> window_input(const LabeledWindow& w) {
  return w.x.template cast<T>();
}

}  // namespace detail

// Predictions for every window, B x 2.
template <class T>
Mat<double> predict(const FtinParams<T>& params, const FtinConfig& cfg, const std::vector<LabeledWindow>& windows,
                    int threads = 1) {
  Mat<double> out(static_cast<Index>(windows.size()), 2);
  detail::parallel_chunks(windows.size(), threads, [&](std::size_t b, std::size_t e, int) {
    for (std::size_t i = b; i < e; ++i) {
      out.row(static_cast<Index>(i)) = ftin_forward(params, cfg, detail::window_input<T>(windows[i])).template cast<double>().transpose();
    }
  });
  return out;
}

inline Mat<double> labels_of(const std::vector<LabeledWindow>& windows) {
  Mat<double> out(static_cast<Index>(windows.size()), 2);
  for (std::size_t i = 0; i < windows.size(); ++i) out.row(static_cast<Index>(i)) = windows[i].v.transpose();
  return out;
}

template <class T>
double evaluate_loss(const FtinParams<T>& params, const FtinConfig& cfg, const std::vector<LabeledWindow>& windows,
                     int threads = 1) {
  return mse_loss<double>(predict(params, cfg, windows, threads), labels_of(windows));
}

template <class T>
TrainState<T> initial_train_state(const FtinConfig& model_cfg, const TrainConfig& cfg) {
  TrainState<T> st;
  st.params = init_params<T>(model_cfg, cfg.seed);
  st.best = st.params;
  st.adam.m = nn::zeros_like(st.params);
  st.adam.v = nn::zeros_like(st.params);
  st.lr = cfg.lr_init;
  return st;
}

// Trains from `state` (a fresh state from initial_train_state, or one restored
// from a checkpoint) until the learning rate drops below the floor or
// max_epochs is reached. Deterministic for a fixed seed and thread count.
template <class T>
TrainResult<T> train(const FtinConfig& model_cfg, const TrainConfig& cfg, const std::vector<LabeledWindow>& train_set,
                     const std::vector<LabeledWindow>& val_set, TrainState<T> state, const TrainCallbacks<T>& cb = {}) {
  validate(model_cfg);
  validate(cfg);
  if (train_set.empty()) throw SizeError("train: empty training set");
  if (val_set.empty()) throw SizeError("train: empty validation set");

  PlateauSchedule schedule(cfg.lr_init, cfg.lr_decay_factor, cfg.plateau_patience, cfg.lr_floor);
  schedule.restore(state.lr, state.best_val, state.since_improvement);

  const int workers = cfg.threads;
  std::vector<FtinParams<T>> grads(static_cast<std::size_t>(workers), nn::zeros_like(state.params));
  std::vector<double> sq_err(static_cast<std::size_t>(workers));
  FtinParams<T> total = nn::zeros_like(state.params);

  std::vector<std::size_t> order(train_set.size());
  const auto t0 = std::chrono::steady_clock::now();

  while (!state.finished && state.next_epoch < cfg.max_epochs) {
    const int epoch = state.next_epoch;
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng(cfg.seed, 0xE90C0000ULL + static_cast<std::uint64_t>(epoch)).shuffle(order);

    double epoch_sq = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto bsz = static_cast<T>(end - start);
      const auto where = [&] { return " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index); };
      try {
        detail::parallel_chunks(end - start, workers, [&](std::size_t b, std::size_t e, int w) {
          auto& g = grads[static_cast<std::size_t>(w)];
          nn::set_zero(g);
          double sq = 0.0;
          FtinCache<T> cache;
          for (std::size_t k = start + b; k < start + e; ++k) {
            const auto& win = train_set[order[k]];
            const Vec<T> pred = ftin_forward(state.params, model_cfg, detail::window_input<T>(win), &cache);
            const Vec<T> diff = pred - win.v.cast<T>();
            sq += static_cast<double>(diff.squaredNorm());
            // d/dpred of sum(diff^2) / (2B)
            ftin_backward(state.params, model_cfg, cache, Vec<T>(diff / bsz), g);
          }
          sq_err[static_cast<std::size_t>(w)] = sq;
        });
      } catch (const NumericError& e) {
        throw NumericError(std::string("train: non-finite value") + where() + ": " + e.what());
      }
      nn::set_zero(total);
      double batch_sq = 0.0;
      const int used = std::max(1, std::min<int>(workers, static_cast<int>(end - start)));
      auto tv = nn::tensor_views(total);
      for (int w = 0; w < used; ++w) {
        batch_sq += sq_err[static_cast<std::size_t>(w)];
        auto gv = nn::tensor_views(grads[static_cast<std::size_t>(w)]);
        for (std::size_t k = 0; k < tv.size(); ++k)
          for (Index i = 0; i < tv[k].size(); ++i) tv[k].data[i] += gv[k].data[i];
      }
      if (!std::isfinite(batch_sq) || !nn::all_finite(total)) {
        throw NumericError("train: non-finite loss" + where());
      }
      epoch_sq += batch_sq;
      adam_step(state.params, total, state.adam, cfg, schedule.lr());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_sq / (2.0 * static_cast<double>(train_set.size()));
    rec.val_loss = evaluate_loss(state.params, model_cfg, val_set, workers);
    rec.lr = schedule.lr();
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(rec.val_loss)) throw NumericError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    state.history.epochs.push_back(rec);

    if (schedule.observe(rec.val_loss)) state.best = state.params;
    state.lr = schedule.lr();
    state.best_val = schedule.best();
    state.since_improvement = schedule.since_improvement();
    state.next_epoch = epoch + 1;
    state.finished = schedule.exhausted() || state.next_epoch >= cfg.max_epochs;

    if (cb.log) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "epoch %d train %.6g val %.6g lr %.3g", epoch, rec.train_loss, rec.val_loss, rec.lr);
      cb.log(buf);
    }
    if (cb.on_epoch) cb.on_epoch(state);
  }
  return {state.best, state.history};
}

template <class T>
TrainResult<T> train(const FtinConfig& model_cfg, const TrainConfig& cfg, const std::vector<LabeledWindow>& train_set,
                     const std::vector<LabeledWindow>& val_set, const TrainCallbacks<T>& cb = {}) {
  return train<T>(model_cfg, cfg, train_set, val_set, initial_train_state<T>(model_cfg, cfg), cb);
}

}  // namespace ftin
