#include "afa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "afa/errors.hpp"

namespace afa {
namespace {

void check_dims(const Parameters<float>& params, const Dataset& data) {
  const NetworkConfig& c = params.config();
  if (c.height != data.height || c.width != data.width || c.channels != data.channels ||
      c.action_dim != data.action_dim) {
    throw ConfigError("model expects " + std::to_string(c.channels) + "x" +
                      std::to_string(c.height) + "x" + std::to_string(c.width) + " frames with " +
                      std::to_string(c.action_dim) + "-d actions; dataset has " +
                      std::to_string(data.channels) + "x" + std::to_string(data.height) + "x" +
                      std::to_string(data.width) + " with " + std::to_string(data.action_dim));
  }
}

// Calls fn(i) for i in [0, n) on up to `threads` workers (strided partition).
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += threads) fn(i);
    });
  }
}

double squared_error(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

std::size_t unique_argmax(const Tensor& frame, std::size_t seq, std::size_t t) {
  const std::size_t best = argmax_index(frame);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (i != best && frame[i] == frame[best]) {
      throw std::invalid_argument("sequence " + std::to_string(seq) + " frame " +
                                  std::to_string(t) + " has no unique brightest pixel");
    }
  }
  return best;
}

}  // namespace

std::size_t argmax_index(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] > t[best]) best = i;
  }
  return best;
}

EvalReport eval_mse(const Parameters<float>& params, const Dataset& data,
                    const EvalOptions& options) {
  check_dims(params, data);
  data.validate();
  const std::size_t n = data.sequences.size();
  std::vector<SequenceMetrics> per(n);
  std::vector<std::vector<std::vector<float>>> errors(n);
  std::vector<double> model_sum(n, 0), base_sum(n, 0), pixels(n, 0);

  parallel_for(n, options.threads, [&](std::size_t s) {
    const Sequence& seq = data.sequences[s];
    if (seq.length() == 0) return;
    RolloutResult<float> res = rollout(params, seq, options.step);
    SequenceMetrics m;
    for (std::size_t t = 1; t < seq.length(); ++t) {
      model_sum[s] += squared_error(res.predictions[t], seq.frames[t]);
      base_sum[s] += squared_error(seq.frames[t - 1], seq.frames[t]);
      pixels[s] += static_cast<double>(seq.frames[t].size());
      ++m.counted_frames;
    }
    if (pixels[s] > 0) {
      m.model_mse = model_sum[s] / pixels[s];
      m.baseline_mse = base_sum[s] / pixels[s];
    }
    per[s] = m;
    errors[s] = std::move(res.error_means);
  });

  EvalReport report;
  double model_total = 0, base_total = 0, pixel_total = 0;
  std::vector<std::size_t> counts;
  for (std::size_t s = 0; s < n; ++s) {
    model_total += model_sum[s];
    base_total += base_sum[s];
    pixel_total += pixels[s];
    for (std::size_t t = 0; t < errors[s].size(); ++t) {
      if (report.layer_error.size() <= t) {
        report.layer_error.emplace_back(errors[s][t].size(), 0.0);
        counts.push_back(0);
      }
      for (std::size_t l = 0; l < errors[s][t].size(); ++l) {
        report.layer_error[t][l] += errors[s][t][l];
      }
      ++counts[t];
    }
  }
  for (std::size_t t = 0; t < report.layer_error.size(); ++t) {
    for (auto& v : report.layer_error[t]) v /= static_cast<double>(counts[t]);
  }
  if (pixel_total > 0) {
    report.model_mse = model_total / pixel_total;
    report.baseline_mse = base_total / pixel_total;
  }
  report.sequences = std::move(per);
  return report;
}

double argmax_accuracy(const Parameters<float>& params, const Dataset& data, std::size_t min_t,
                       const EvalOptions& options) {
  check_dims(params, data);
  const std::size_t n = data.sequences.size();
  std::vector<std::size_t> hits(n, 0), total(n, 0);
  parallel_for(n, options.threads, [&](std::size_t s) {
    const Sequence& seq = data.sequences[s];
    if (seq.length() == 0) return;
    RolloutResult<float> res = rollout(params, seq, options.step);
    for (std::size_t t = min_t; t < seq.length(); ++t) {
      hits[s] += argmax_index(res.predictions[t]) == argmax_index(seq.frames[t]);
      ++total[s];
    }
  });
  std::size_t h = 0, tot = 0;
  for (std::size_t s = 0; s < n; ++s) {
    h += hits[s];
    tot += total[s];
  }
  return tot ? static_cast<double>(h) / static_cast<double>(tot) : 0.0;
}

SwapProbeResult action_swap_probe(const Parameters<float>& params, const Dataset& data,
                                  const SwapProbeOptions& options) {
  check_dims(params, data);
  data.validate();
  if (options.right_action.size() != data.action_dim || options.down_action.size() != data.action_dim) {
    throw std::invalid_argument("probe actions must match the dataset action dimension");
  }
  const std::size_t h = data.height, w = data.width;
  const std::size_t n = data.sequences.size();
  // Validate up front so worker threads never throw.
  std::vector<std::vector<std::size_t>> positions(n);
  for (std::size_t s = 0; s < n; ++s) {
    const Sequence& seq = data.sequences[s];
    for (std::size_t t = 0; t < seq.length(); ++t) {
      positions[s].push_back(unique_argmax(seq.frames[t], s, t));
    }
  }

  struct Counts {
    std::size_t states = 0, right = 0, down = 0, differ = 0, same = 0;
    std::vector<std::size_t> hits_by_t, states_by_t;
  };
  std::vector<Counts> per(n);
  parallel_for(n, options.threads, [&](std::size_t s) {
    const Sequence& seq = data.sequences[s];
    if (seq.length() <= options.min_t) return;
    Sequence as_right = seq, as_down = seq;
    std::fill(as_right.actions.begin(), as_right.actions.end(), options.right_action);
    std::fill(as_down.actions.begin(), as_down.actions.end(), options.down_action);
    const auto pr = rollout(params, as_right, options.step).predictions;
    const auto pd = rollout(params, as_down, options.step).predictions;
    Counts& c = per[s];
    c.hits_by_t.assign(seq.length(), 0);
    c.states_by_t.assign(seq.length(), 0);
    const std::size_t last = std::min(seq.length() - 1, options.max_t);
    for (std::size_t t = options.min_t; t <= last; ++t) {
      const std::size_t plane_idx = positions[s][t - 1] % (h * w);
      const std::size_t y = plane_idx / w, x = plane_idx % w;
      const std::size_t want_right = y * w + (x + 1) % w;
      const std::size_t want_down = ((y + 1) % h) * w + x;
      const std::size_t got_right = argmax_index(pr[t]) % (h * w);
      const std::size_t got_down = argmax_index(pd[t]) % (h * w);
      ++c.states;
      c.right += got_right == want_right;
      c.down += got_down == want_down;
      c.hits_by_t[t] += (got_right == want_right) + (got_down == want_down);
      c.states_by_t[t] += 2;
      c.differ += got_right != got_down;
      c.same += bitwise_equal(pr[t], pd[t]);
    }
  });

  Counts total;
  for (const auto& c : per) {
    if (total.hits_by_t.size() < c.hits_by_t.size()) {
      total.hits_by_t.resize(c.hits_by_t.size(), 0);
      total.states_by_t.resize(c.states_by_t.size(), 0);
    }
    for (std::size_t t = 0; t < c.hits_by_t.size(); ++t) {
      total.hits_by_t[t] += c.hits_by_t[t];
      total.states_by_t[t] += c.states_by_t[t];
    }
    total.states += c.states;
    total.right += c.right;
    total.down += c.down;
    total.differ += c.differ;
    total.same += c.same;
  }
  SwapProbeResult r;
  r.states = total.states;
  for (std::size_t t = 0; t < total.hits_by_t.size(); ++t) {
    r.accuracy_by_t.push_back(total.states_by_t[t] ? static_cast<double>(total.hits_by_t[t]) /
                                                         static_cast<double>(total.states_by_t[t])
                                                   : 0.0);
  }
  if (total.states > 0) {
    const double s = static_cast<double>(total.states);
    r.right_accuracy = static_cast<double>(total.right) / s;
    r.down_accuracy = static_cast<double>(total.down) / s;
    r.accuracy = static_cast<double>(total.right + total.down) / (2 * s);
    r.argmax_differs = static_cast<double>(total.differ) / s;
    r.bitwise_identical = static_cast<double>(total.same) / s;
  }
  return r;
}

GuDump dump_gu(const Parameters<float>& params, const Sequence& sequence, std::size_t layer,
               const std::optional<std::vector<float>>& action_override) {
  const NetworkConfig& cfg = params.config();
  if (layer >= cfg.num_layers) {
    throw std::invalid_argument("layer " + std::to_string(layer) + " out of range (network has " +
                                std::to_string(cfg.num_layers) + ")");
  }
  if (sequence.length() == 0) throw std::invalid_argument("dump_gu: empty sequence");
  GuDump dump;
  dump.layer = layer;
  NetworkState<float> states = init_state<float>(cfg);
  for (std::size_t t = 0; t < sequence.length(); ++t) {
    const std::vector<float>& action = action_override ? *action_override : sequence.actions[t];
    network_step(params, states, sequence.frames[t], std::span<const float>(action));
    const LayerState<float>& st = states[layer];
    std::vector<Tensor> units;
    for (const auto& u : st.units) units.push_back(u.h);
    dump.units.push_back(std::move(units));
    dump.weights.push_back(st.attention);
    dump.combined.push_back(st.r);
  }
  return dump;
}

std::string attention_table(const GuDump& dump) {
  std::ostringstream os;
  os << "t";
  const std::size_t d = dump.weights.empty() ? 0 : dump.weights[0].size();
  for (std::size_t i = 1; i <= d; ++i) os << "\tw_" << i;
  os << "\n";
  char buf[32];
  for (std::size_t t = 0; t < dump.weights.size(); ++t) {
    os << t;
    for (float v : dump.weights[t]) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
      os << "\t" << buf;
    }
    os << "\n";
  }
  return os.str();
}

namespace {

Tensor channel_as_unit_range(const Tensor& t, std::size_t c) {
  const std::size_t h = t.dim(1), w = t.dim(2);
  Tensor img(Shape{h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) img[y * w + x] = (t.at(c, y, x) + 1.0f) * 0.5f;
  }
  return img;
}

std::string padded(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 0, '0') + s;
}

}  // namespace

std::size_t write_gu_dump(const GuDump& dump, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  std::size_t files = 0;
  for (std::size_t t = 0; t < dump.units.size(); ++t) {
    const std::string tt = "t" + padded(t, 3);
    for (std::size_t d = 0; d < dump.units[t].size(); ++d) {
      const Tensor& h = dump.units[t][d];
      for (std::size_t c = 0; c < h.dim(0); ++c) {
        export_pgm(channel_as_unit_range(h, c),
                   dir / (tt + "_gu" + std::to_string(d) + "_c" + padded(c, 2) + ".pgm"));
        ++files;
      }
    }
    const Tensor& r = dump.combined[t];
    for (std::size_t c = 0; c < r.dim(0); ++c) {
      export_pgm(channel_as_unit_range(r, c), dir / (tt + "_R_c" + padded(c, 2) + ".pgm"));
      ++files;
    }
  }
  std::ofstream table(dir / "attention.tsv");
  table << attention_table(dump);
  if (!table) throw IoError("failed writing '" + (dir / "attention.tsv").string() + "'");
  return files;
}

std::string pgm_string(const Tensor& image) {
  std::size_t h = 0, w = 0;
  if (image.rank() == 2) {
    h = image.dim(0);
    w = image.dim(1);
  } else if (image.rank() == 3 && image.dim(0) == 1) {
    h = image.dim(1);
    w = image.dim(2);
  } else {
    throw std::invalid_argument("export_pgm needs a single-channel image, got " +
                                image.shape().str());
  }
  std::ostringstream os;
  os << "P2\n" << w << " " << h << "\n255\n";
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const float v = std::clamp(image[y * w + x], 0.0f, 1.0f);
      os << (x ? " " : "") << static_cast<int>(std::lround(v * 255.0f));
    }
    os << "\n";
  }
  return os.str();
}

void export_pgm(const Tensor& image, const std::filesystem::path& path) {
  const std::string text = pgm_string(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace afa
