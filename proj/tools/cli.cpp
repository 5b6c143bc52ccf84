#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "sok/data.hpp"
#include "sok/errors.hpp"
#include "sok/extension.hpp"
#include "sok/fft.hpp"
#include "sok/fno.hpp"
#include "sok/spectral_ops.hpp"
#include "sok/train.hpp"

namespace sok::cli {

namespace fs = std::filesystem;

namespace {

// bad flags, missing or unwritable files
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// a check the command was asked to make did not pass
struct ValidationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && ws(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path() && !fs::exists(p.parent_path())) {
    throw UsageError("output directory does not exist: " + p.parent_path().string());
  }
  std::ofstream os(p);
  if (!os) throw UsageError("cannot write " + p.string());
  return os;
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw UsageError(std::string(what) + " path is required");
  if (!fs::exists(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

void footer(std::ostream& os, const std::string& invocation) { os << "# invocation: " << invocation << '\n'; }

std::vector<std::size_t> broadcast(std::vector<std::size_t> v, std::size_t dim, const char* what) {
  if (v.size() == 1 && dim > 1) v.assign(dim, v[0]);
  if (v.size() != dim) {
    throw UsageError(std::string(what) + ": expected 1 or " + std::to_string(dim) + " values, got " +
                     std::to_string(v.size()));
  }
  return v;
}

// Samples [begin, end) of a [S, ...] tensor.
RealTensor rows(const RealTensor& x, std::size_t begin, std::size_t end) {
  Shape s = x.shape();
  const std::size_t per = x.size() / s[0];
  s[0] = end - begin;
  std::vector<double> v(x.data().begin() + long(begin * per), x.data().begin() + long(end * per));
  return RealTensor(s, std::move(v));
}

Shape spatial_shape(const RealTensor& fields) { return Shape(fields.shape().begin() + 2, fields.shape().end()); }

void warn_nyquist(const NyquistReport& rep, std::ostream& err) {
  if (!rep.ok()) throw NyquistError(rep.summary());
  if (rep.has_warning()) err << "warning: " << rep.summary() << '\n';
}

struct Context {
  std::string invocation;
  std::ostream& out;
  std::ostream& err;
};

// ---- config files ----------------------------------------------------------

const std::vector<std::string> kCommands{"gen", "train", "eval", "superres", "rollout", "diagnose", "extend", "report"};

// Fills options the command line left unset. Sections named after another
// subcommand are skipped so one file can carry several commands.
void apply_config(CLI::App* sub, const fs::path& path) {
  require_file(path, "config file");
  for (const auto& e : read_ini(path)) {
    if (!e.section.empty() && e.section != sub->get_name() &&
        std::find(kCommands.begin(), kCommands.end(), e.section) != kCommands.end()) {
      continue;
    }
    const std::string key = std::string(e.key.size() == 1 ? "-" : "--") + e.key;
    CLI::Option* opt = nullptr;
    try {
      opt = sub->get_option(key);
    } catch (const CLI::OptionNotFound&) {
      throw UsageError(path.string() + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "' for " +
                       sub->get_name());
    }
    if (opt->count() > 0) continue;
    std::vector<std::string> parts;
    if (opt->get_items_expected_max() > 1) {
      std::string tok;
      std::istringstream ss(e.value);
      while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) parts.push_back(tok);
      }
    } else {
      parts.push_back(e.value);
    }
    for (const auto& p : parts) opt->add_result(p);
    try {
      opt->run_callback();
    } catch (const CLI::Error& ex) {
      throw UsageError(path.string() + ": " + e.key + ": " + ex.what());
    }
  }
}

std::uint64_t resolve_seed(CLI::Option* opt, std::uint64_t value) {
  if (opt->count() > 0) return value;
  if (const char* env = std::getenv("SOK_SEED"); env && *env) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw UsageError(std::string("SOK_SEED is not an unsigned integer: ") + env);
    return v;
  }
  return value;
}

// ---- gen -------------------------------------------------------------------

struct GenArgs {
  GenSpec spec;
  std::size_t dim = 1;
  double length = 2.0 * std::numbers::pi;
  std::string downsample;
  std::size_t factor = 1;
  bool f32 = false;
  fs::path output;
};

void cmd_gen(GenArgs a, Context& ctx) {
  a.spec.grf.dim = a.dim;
  a.spec.grf.length = a.length;
  Dataset ds = generate_dataset(a.spec);
  if (!a.downsample.empty() && a.factor > 1) {
    const auto strategy = parse_downsample(a.downsample);
    const std::size_t d = ds.grid.rank();
    ds.inputs = downsample(ds.inputs, strategy, a.factor, d);
    ds.outputs = downsample(ds.outputs, strategy, a.factor, d);
    std::vector<std::size_t> res(d, a.spec.grf.resolution / a.factor);
    ds.attrs["source_resolution"] = double(a.spec.grf.resolution);
    ds.attrs["downsample_factor"] = double(a.factor);
    ds.attrs["downsample_strategy"] = double(static_cast<int>(strategy));
    ds.grid = ds.grid.resampled(res);
    ds.compute_stats();
  }
  ds.f32 = a.f32;
  write_dataset(a.output, ds);
  ctx.out << "wrote " << a.output.string() << ": " << ds.problem << ", " << ds.samples() << " samples (" << ds.n_train
          << " train), fields " << shape_string(spatial_shape(ds.inputs)) << '\n';
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  fs::path data;
  fs::path output = "model.fnom";
  fs::path history;
  std::vector<std::size_t> modes{12};
  std::vector<std::size_t> max_modes;
  std::size_t width = 16;
  std::size_t layers = 4;
  double lifting_ratio = 2.0;
  double projection_ratio = 2.0;
  double mlp_expansion = 0.5;
  std::string activation = "gelu";
  std::string fno_skip = "linear";
  std::string mlp_skip = "soft-gating";
  std::string factorization = "dense";
  double rank = 1.0;
  std::string norm = "none";
  std::vector<double> padding;
  TrainConfig tc;
  std::string loss = "lp-rel";
  std::string optimizer = "adam";
  std::string schedule = "cosine";
  std::string balancer = "fixed";
  bool ifno = false;
  std::string ifno_criterion = "explained";
  IfnoSchedule ifno_schedule;
  bool no_normalize = false;
  bool no_shuffle = false;
};

void cmd_train(TrainArgs a, Context& ctx) {
  require_file(a.data, "dataset");
  const Dataset ds = read_dataset(a.data);
  if (ds.samples() == 0 || ds.n_train == 0) throw UsageError("dataset has no training samples");
  const std::size_t d = ds.grid.rank();
  FnoConfig c;
  c.n_modes = broadcast(a.modes, d, "--modes");
  if (a.ifno) {
    if (a.max_modes.empty()) {
      for (std::size_t j = 0; j < d; ++j) a.max_modes.push_back(std::max(c.n_modes[j], ds.grid.resolution[j] / 2));
    }
    c.max_n_modes = broadcast(a.max_modes, d, "--max-modes");
  } else if (!a.max_modes.empty()) {
    c.max_n_modes = broadcast(a.max_modes, d, "--max-modes");
  }
  c.hidden_channels = a.width;
  c.in_channels = ds.inputs.extent(1);
  c.out_channels = ds.outputs.extent(1);
  c.n_layers = a.layers;
  c.lifting_channel_ratio = a.lifting_ratio;
  c.projection_channel_ratio = a.projection_ratio;
  c.channel_mlp_expansion = a.mlp_expansion;
  c.activation = parse_activation(a.activation);
  c.fno_skip = parse_skip_kind(a.fno_skip);
  c.channel_mlp_skip = parse_skip_kind(a.mlp_skip);
  c.factorization = parse_factorization(a.factorization);
  c.rank = a.rank;
  c.norm = parse_norm_kind(a.norm);
  c.domain_padding = a.padding;
  c.validate();
  warn_nyquist(validate_nyquist(c.stored_modes(), ds.grid), ctx.err);

  TrainConfig tc = a.tc;
  tc.loss.kind = parse_loss_kind(a.loss);
  tc.optimizer.kind = parse_optimizer(a.optimizer);
  tc.optimizer.schedule = parse_schedule(a.schedule);
  tc.balancer.kind = parse_balancer(a.balancer);
  tc.normalize = !a.no_normalize;
  tc.shuffle = !a.no_shuffle;
  if (a.ifno) {
    IfnoSchedule s = a.ifno_schedule;
    s.criterion = parse_ifno_criterion(a.ifno_criterion);
    tc.ifno = s;
  }
  FnoModel model(c, tc.seed);
  const auto r = train(model, ds, tc);
  write_checkpoint(a.output, model, r.input_stats, r.output_stats);
  const fs::path hist = a.history.empty() ? fs::path(a.output.string() + ".history.csv") : a.history;
  write_history_csv(hist, r, ctx.invocation);
  ctx.out << "wrote " << a.output.string() << " and " << hist.string() << '\n';
  if (!r.history.empty()) {
    const auto& e = r.history.back();
    ctx.out << "epoch " << e.epoch << ": train rel L2 " << short_num(e.train_rel_l2);
    if (e.test_rel_l2 >= 0) ctx.out << ", test rel L2 " << short_num(e.test_rel_l2);
    if (r.ifno) {
      ctx.out << ", modes";
      for (auto k : e.modes) ctx.out << ' ' << k;
    }
    ctx.out << '\n';
  }
}

// ---- eval ------------------------------------------------------------------

struct Split {
  std::size_t begin = 0, end = 0;
};

Split pick_split(const Dataset& ds, const std::string& split) {
  if (split == "train") return {0, ds.n_train};
  if (split == "test") return {ds.n_train, ds.samples()};
  return {0, ds.samples()};
}

struct EvalArgs {
  fs::path ckpt;
  fs::path data;
  fs::path output;
  std::string split = "all";
};

void cmd_eval(const EvalArgs& a, Context& ctx) {
  require_file(a.ckpt, "checkpoint");
  require_file(a.data, "dataset");
  const Checkpoint ck = read_checkpoint(a.ckpt);
  const Dataset ds = read_dataset(a.data);
  const Split sp = pick_split(ds, a.split);
  if (ds.samples() == 0 || sp.end <= sp.begin) throw UsageError("dataset split '" + a.split + "' is empty");
  warn_nyquist(validate_nyquist(ck.model.config().n_modes, ds.grid), ctx.err);
  const RealTensor x = rows(ds.inputs, sp.begin, sp.end);
  const RealTensor y = rows(ds.outputs, sp.begin, sp.end);
  const RealTensor pred = predict(ck.model, x, ck.input_stats, ck.output_stats);
  const auto rel = relative_l2_per_sample(pred, y);
  const std::size_t n = rel.size();
  std::vector<double> h1(n), abs_l2(n);
  Shape one = y.shape();
  one[0] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const RealTensor p = rows(pred, i, i + 1), t = rows(y, i, i + 1);
    h1[i] = std::sqrt(h1_loss(p, t, ds.grid, true));
    abs_l2[i] = std::sqrt(lp_loss(p, t, ds.grid, 2.0, false));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
  };
  std::ostringstream csv;
  csv << "sample,rel_l2,rel_h1,abs_l2\n";
  for (std::size_t i = 0; i < n; ++i) {
    csv << sp.begin + i << ',' << num(rel[i]) << ',' << num(h1[i]) << ',' << num(abs_l2[i]) << '\n';
  }
  csv << "mean," << num(mean_relative_l2(pred, y)) << ',' << num(mean(h1)) << ',' << num(mean(abs_l2)) << '\n';
  footer(csv, ctx.invocation);
  if (a.output.empty()) {
    ctx.out << csv.str();
  } else {
    open_out(a.output) << csv.str();
    ctx.out << a.split << " split (" << n << " samples): mean rel L2 " << short_num(mean_relative_l2(pred, y))
            << ", mean rel H1 " << short_num(mean(h1)) << '\n';
  }
}

// ---- superres --------------------------------------------------------------

struct SuperresArgs {
  fs::path ckpt;
  fs::path data;
  fs::path output;
  std::vector<std::size_t> coarse;
  std::string split = "test";
  double max_ratio = 0;
};

double rel_diff(const RealTensor& a, const RealTensor& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

void cmd_superres(const SuperresArgs& a, Context& ctx) {
  require_file(a.ckpt, "checkpoint");
  require_file(a.data, "dataset");
  const Checkpoint ck = read_checkpoint(a.ckpt);
  const Dataset ds = read_dataset(a.data);
  Split sp = pick_split(ds, a.split);
  if (sp.end <= sp.begin) sp = {0, ds.samples()};
  if (ds.samples() == 0) throw UsageError("dataset is empty");
  const std::size_t d = ds.grid.rank();
  std::vector<std::size_t> coarse = a.coarse;
  if (coarse.empty()) {
    for (auto n : ds.grid.resolution) coarse.push_back(n / 2);
  }
  coarse = broadcast(coarse, d, "--coarse-res");
  for (std::size_t j = 0; j < d; ++j) {
    if (coarse[j] > ds.grid.resolution[j]) throw UsageError("--coarse-res exceeds the dataset resolution");
  }
  const GridSpec cgrid = ds.grid.resampled(coarse);
  const auto& modes = ck.model.config().n_modes;
  warn_nyquist(validate_nyquist(modes, ds.grid), ctx.err);
  warn_nyquist(validate_nyquist(modes, cgrid), ctx.err);

  const RealTensor xf = rows(ds.inputs, sp.begin, sp.end), yf = rows(ds.outputs, sp.begin, sp.end);
  const RealTensor xc = spectral_truncate(xf, coarse), yc = spectral_truncate(yf, coarse);
  const RealTensor pf = predict(ck.model, xf, ck.input_stats, ck.output_stats);
  const RealTensor pc = predict(ck.model, xc, ck.input_stats, ck.output_stats);
  const double ef = mean_relative_l2(pf, yf), ec = mean_relative_l2(pc, yc);
  const double consistency = rel_diff(spectral_truncate(pf, coarse), pc);
  const double ratio = ec > 0 ? ef / ec : std::numeric_limits<double>::infinity();

  std::ostringstream csv;
  csv << "metric,value\n";
  csv << "fine_resolution," << ds.grid.resolution[0] << '\n';
  csv << "coarse_resolution," << coarse[0] << '\n';
  csv << "samples," << sp.end - sp.begin << '\n';
  csv << "fine_rel_l2," << num(ef) << '\n';
  csv << "coarse_rel_l2," << num(ec) << '\n';
  csv << "error_ratio," << num(ratio) << '\n';
  csv << "truncation_consistency," << num(consistency) << '\n';
  footer(csv, ctx.invocation);
  if (a.output.empty()) {
    ctx.out << csv.str();
  } else {
    open_out(a.output) << csv.str();
    ctx.out << "rel L2 at " << shape_string(ds.grid.resolution) << ": " << short_num(ef) << ", at "
            << shape_string(coarse) << ": " << short_num(ec) << " (ratio " << short_num(ratio)
            << "); truncated fine vs coarse prediction " << short_num(consistency) << '\n';
  }
  if (a.max_ratio > 0 && !(ratio <= a.max_ratio)) {
    throw ValidationFailure("fine/coarse error ratio " + short_num(ratio) + " exceeds " + short_num(a.max_ratio));
  }
}

// ---- rollout ---------------------------------------------------------------

bool has_magic(const fs::path& p, const char* magic) {
  std::ifstream is(p, std::ios::binary);
  char m[4] = {};
  is.read(m, 4);
  return is.gcount() == 4 && std::equal(m, m + 4, magic);
}

// Numbers from a text file; lines starting with '#' and header lines are skipped.
std::vector<std::vector<double>> read_numbers(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw UsageError("cannot read " + p.string());
  std::vector<std::vector<double>> out;
  for (std::string line; std::getline(is, line);) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::string tok;
    for (char& ch : line) {
      if (ch == ',' || ch == ';' || ch == '\t') ch = ' ';
    }
    std::istringstream ss(line);
    bool numeric = true;
    while (ss >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (out.empty()) continue;  // header
      throw FormatError(p.string() + ": non-numeric value '" + tok + "'");
    }
    out.push_back(std::move(row));
  }
  if (out.empty()) throw FormatError(p.string() + " holds no numbers");
  return out;
}

struct RolloutArgs {
  fs::path ckpt;
  fs::path u0;
  fs::path output = "trajectory.csv";
  fs::path errors;
  std::size_t steps = 10;
  std::size_t sample = 0;
  bool residual = false;
  std::string reference = "auto";
  double nu = -1;
  double dt = -1;
  double length = 2.0 * std::numbers::pi;
};

void cmd_rollout(RolloutArgs a, Context& ctx) {
  require_file(a.ckpt, "checkpoint");
  require_file(a.u0, "initial state");
  const Checkpoint ck = read_checkpoint(a.ckpt);
  RealTensor u0;
  GridSpec grid;
  std::string problem;
  if (has_magic(a.u0, "FNOD")) {
    const Dataset ds = read_dataset(a.u0);
    if (a.sample >= ds.samples()) throw UsageError("--sample out of range");
    u0 = slice_leading(ds.inputs, a.sample);
    grid = ds.grid;
    problem = ds.problem;
    if (a.nu < 0 && ds.attrs.count("nu")) a.nu = ds.attrs.at("nu");
    if (a.dt < 0 && ds.attrs.count("t")) a.dt = ds.attrs.at("t");
  } else {
    std::vector<double> v;
    for (const auto& row : read_numbers(a.u0)) v.push_back(row.back());
    const std::size_t n = v.size();
    grid = GridSpec::periodic_box({n}, a.length);
    u0 = RealTensor({1, n}, std::move(v));
  }
  if (u0.extent(0) != ck.model.config().in_channels) throw UsageError("initial state channel count does not match the model");
  const auto traj = rollout(ck.model, u0, a.steps, a.residual, ck.input_stats, ck.output_stats);

  {
    auto os = open_out(a.output);
    os << "step,channel";
    const std::size_t per = u0.size() / u0.extent(0);
    for (std::size_t j = 0; j < per; ++j) os << ",x" << j;
    os << '\n';
    for (std::size_t s = 0; s < traj.size(); ++s) {
      for (std::size_t ch = 0; ch < u0.extent(0); ++ch) {
        os << s << ',' << ch;
        for (std::size_t j = 0; j < per; ++j) os << ',' << num(traj[s][ch * per + j]);
        os << '\n';
      }
    }
    footer(os, ctx.invocation);
  }
  ctx.out << "wrote " << a.output.string() << ": " << traj.size() << " states\n";

  const bool heat = a.reference == "heat" || (a.reference == "auto" && problem == "heat");
  if (!heat) return;
  if (a.nu < 0 || a.dt <= 0) throw UsageError("heat reference needs --nu and --dt");
  std::vector<double> err(traj.size());
  for (std::size_t s = 0; s < traj.size(); ++s) {
    const RealTensor exact = heat_operator_exact(u0, a.nu, a.dt * double(s), grid);
    err[s] = rel_diff(traj[s], exact);
  }
  bool monotone = true;
  for (std::size_t s = 2; s < err.size(); ++s) monotone = monotone && err[s] >= err[s - 1];
  const fs::path epath = a.errors.empty() ? fs::path(a.output.string() + ".errors.csv") : a.errors;
  auto os = open_out(epath);
  os << "step,rel_l2,linear_budget,ratio_to_budget\n";
  for (std::size_t s = 0; s < err.size(); ++s) {
    const double budget = err.size() > 1 ? double(s) * err[1] : 0.0;
    os << s << ',' << num(err[s]) << ',' << num(budget) << ',' << (budget > 0 ? num(err[s] / budget) : "") << '\n';
  }
  footer(os, ctx.invocation);
  if (a.steps > 0) {
    ctx.out << "error vs exact heat: step 1 " << short_num(err[1]) << ", step " << a.steps << ' ' << short_num(err.back())
            << "; non-decreasing: " << (monotone ? "yes" : "no") << '\n';
  }
}

// ---- diagnose --------------------------------------------------------------

// Mean |a_f|^2 per signed frequency along each axis, summed over the other
// axes; a = orthonormal coefficient / sqrt(N) (function coefficients).
std::vector<std::vector<double>> marginal_power(const RealTensor& fields, std::size_t d) {
  const std::size_t s = fields.extent(0) * fields.extent(1);
  const Shape sp = spatial_shape(fields);
  const std::size_t per = shape_size(sp);
  const RealTensor flat = fields.reshaped([&] {
    Shape r{s};
    r.insert(r.end(), sp.begin(), sp.end());
    return r;
  }());
  const RealTensor p = power_spectrum(flat, trailing_axes(d + 1, d));
  std::vector<std::vector<double>> out(d);
  for (std::size_t a = 0; a < d; ++a) out[a].assign(sp[a], 0.0);
  std::vector<std::size_t> idx(d);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < per; ++j) {
      std::size_t rem = j;
      for (std::size_t a = d; a-- > 0;) {
        idx[a] = rem % sp[a];
        rem /= sp[a];
      }
      for (std::size_t a = 0; a < d; ++a) out[a][idx[a]] += p[i * per + j];
    }
  }
  for (auto& v : out) {
    for (auto& x : v) x /= double(s) * double(per);
  }
  return out;
}

// Smallest K whose centered block (f = 0, -1, +1, -2, ...) holds `energy`.
std::size_t recommended_modes(const std::vector<double>& natural, double energy) {
  const std::size_t n = natural.size();
  double total = 0;
  for (double x : natural) total += x;
  if (total <= 0) return 1;
  double acc = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const long f = (k % 2 == 1) ? -long(k / 2 + 1) : long(k / 2);
    acc += natural[std::size_t((f % long(n) + long(n)) % long(n))];
    if (acc >= energy * total) return k + 1;
  }
  return n;
}

struct DiagnoseArgs {
  fs::path data;
  fs::path output;
  double energy = 0.999;
  double tolerance = 1e-12;
};

void cmd_diagnose(const DiagnoseArgs& a, Context& ctx) {
  require_file(a.data, "dataset");
  const Dataset ds = read_dataset(a.data);
  if (ds.samples() == 0) throw UsageError("dataset is empty");
  const std::size_t d = ds.grid.rank();
  const auto pin = marginal_power(ds.inputs, d);
  const auto pout = marginal_power(ds.outputs, d);

  std::ostringstream csv;
  csv << "axis,k,input_power,output_power\n";
  std::vector<std::size_t> rec(d);
  std::vector<std::string> flags, warnings;
  for (std::size_t ax = 0; ax < d; ++ax) {
    const std::size_t n = pin[ax].size();
    for (std::size_t k = 0; k <= n / 2; ++k) {
      double i = pin[ax][k], o = pout[ax][k];
      if (k != 0 && 2 * k != n) {
        i += pin[ax][n - k];
        o += pout[ax][n - k];
      }
      csv << ax << ',' << k << ',' << num(i) << ',' << num(o) << '\n';
    }
    rec[ax] = std::max(recommended_modes(pin[ax], a.energy), recommended_modes(pout[ax], a.energy));
    // energy beyond the 2/3 band hints at an unresolved spectrum
    for (const auto* p : {&pin[ax], &pout[ax]}) {
      double tot = 0, tail = 0;
      for (std::size_t k = 0; k < n; ++k) {
        tot += (*p)[k];
        if (3 * std::size_t(std::labs(signed_frequency(k, n))) > n) tail += (*p)[k];
      }
      if (tot > 0 && tail / tot > 1e-6) {
        warnings.push_back("axis " + std::to_string(ax) + ": " + short_num(tail / tot) +
                           " of the energy lies above N/3 (" + (p == &pin[ax] ? "inputs" : "outputs") + ")");
      }
    }
  }
  if (ds.attrs.count("k_max")) {
    const auto kmax = std::size_t(ds.attrs.at("k_max"));
    for (std::size_t ax = 0; ax < d; ++ax) {
      if (2 * kmax >= ds.grid.resolution[ax]) {
        flags.push_back("nyquist: declared band limit k_max=" + std::to_string(kmax) + " is not resolved at N=" +
                        std::to_string(ds.grid.resolution[ax]));
      }
    }
  }
  double foldback = 0;
  const bool resampled = ds.attrs.count("source_resolution") && ds.attrs.count("downsample_factor");
  if (resampled) {
    // regenerate the fine inputs and compare with their alias-free coarse image
    GrfSpec g;
    g.resolution = std::size_t(ds.attrs.at("source_resolution"));
    g.dim = d;
    g.length = ds.grid.domain_length[0];
    g.gamma = ds.attrs.at("gamma");
    g.k_max = std::size_t(ds.attrs.at("k_max"));
    g.amplitude = ds.attrs.at("amplitude");
    g.seed = std::uint64_t(ds.attrs.at("seed"));
    std::vector<RealTensor> fine;
    for (std::size_t i = 0; i < ds.samples(); ++i) fine.push_back(sample_grf(g, i).reshaped([&] {
      Shape s{1};
      s.insert(s.end(), d, g.resolution);
      return s;
    }()));
    const RealTensor fine_all = stack<double>(fine);
    const auto factor = std::size_t(ds.attrs.at("downsample_factor"));
    const RealTensor clean = downsample(fine_all, DownsampleStrategy::Spectral, factor, d);
    double num_e = 0, den_e = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      num_e += (ds.inputs[i] - clean[i]) * (ds.inputs[i] - clean[i]);
      den_e += ds.inputs[i] * ds.inputs[i];
    }
    foldback = den_e > 0 ? num_e / den_e : 0.0;
    if (foldback > a.tolerance) {
      flags.push_back("aliasing: fold-back energy " + short_num(foldback) + " of the input energy (downsampled from N=" +
                      std::to_string(g.resolution) + ")");
    }
  }
  footer(csv, ctx.invocation);
  if (!a.output.empty()) open_out(a.output) << csv.str();

  ctx.out << "dataset " << a.data.string() << ": " << ds.problem << ", " << ds.samples() << " samples, N "
          << shape_string(ds.grid.resolution) << '\n';
  ctx.out << "recommended n_modes (" << short_num(100 * a.energy) << "% energy):";
  for (auto k : rec) ctx.out << ' ' << k;
  ctx.out << '\n';
  if (resampled) ctx.out << "fold-back energy: " << num(foldback) << '\n';
  for (const auto& w : warnings) ctx.out << "warning: " << w << '\n';
  if (flags.empty()) {
    ctx.out << "flags: none\n";
  } else {
    for (const auto& f : flags) ctx.out << "FLAG " << f << '\n';
    throw ValidationFailure(std::to_string(flags.size()) + " spectral hygiene flag(s) raised");
  }
}

// ---- extend ----------------------------------------------------------------

struct Builtin {
  std::function<double(double)> f, df;
};

std::optional<Builtin> builtin(const std::string& name) {
  constexpr double tau = 2.0 * std::numbers::pi;
  if (name == "exp-sin3") {
    return Builtin{[](double x) { return std::exp(-x) + std::sin(3 * x); },
                   [](double x) { return -std::exp(-x) + 3 * std::cos(3 * x); }};
  }
  if (name == "sin") {
    return Builtin{[=](double x) { return std::sin(tau * x); }, [=](double x) { return tau * std::cos(tau * x); }};
  }
  if (name == "bump") {
    // smooth, all derivatives vanish at 0 and 1
    auto f = [](double x) { return (x <= 0 || x >= 1) ? 0.0 : std::exp(-1.0 / (x * (1 - x))); };
    auto df = [f](double x) {
      if (x <= 0 || x >= 1) return 0.0;
      return f(x) * (1 - 2 * x) / (x * x * (1 - x) * (1 - x));
    };
    return Builtin{f, df};
  }
  return std::nullopt;
}

struct ExtendArgs {
  fs::path signal;
  std::string function;
  std::size_t n = 128;
  std::string method = "fc-legendre";
  std::size_t d = 6;
  std::size_t c = 32;
  double s = 2.0;
  bool seminorm = false;
  bool compare = false;
  fs::path output = "extended.csv";
  fs::path metrics;
};

// Max error of the spectral first derivative over the interior samples.
double derivative_error(const std::vector<double>& f, const std::vector<double>& df, double h,
                        const ExtensionOperator* op) {
  const std::vector<double> g = op ? extend_1d(f, *op) : f;
  const std::size_t m = g.size();
  const GridSpec grid({m}, {h * double(m)}, {true});
  const RealTensor der = spectral_derivative(RealTensor({m}, g), grid, 0, 1);
  const std::size_t off = op ? op->c / 2 : 0;
  double e = 0;
  for (std::size_t j = 0; j < f.size(); ++j) e = std::max(e, std::abs(der[off + j] - df[j]));
  return e;
}

ExtensionOperator build_operator(ExtensionMethod m, std::size_t d, std::size_t c, std::size_t n, double s,
                                 bool seminorm) {
  switch (m) {
    case ExtensionMethod::ZeroPad: return build_zero_pad(c);
    case ExtensionMethod::MirrorPad: return build_mirror_pad(c);
    case ExtensionMethod::FcLegendre: return build_fc_legendre(d, c, n);
    case ExtensionMethod::FcGram: return build_fc_gram(d, c, n);
    case ExtensionMethod::SpectrumOpt: return build_spectrum_opt(n, c, s, seminorm);
  }
  throw UsageError("unknown extension method");
}

// Seam metric at every junction of the extended period: f -> extension,
// extension -> f and the wrap point.
double seam_all(const std::vector<double>& g, std::size_t n, std::size_t c) {
  if (c == 0) return seam_jump(g);
  const std::size_t lead = c / 2;  // extension samples before f
  auto rotated = [&](std::size_t start) {
    std::vector<double> r(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) r[i] = g[(start + i) % g.size()];
    return seam_jump(r);
  };
  return std::max({seam_jump(g), rotated(lead), rotated(lead + n)});
}

void cmd_extend(const ExtendArgs& a, Context& ctx) {
  std::vector<double> f, df;
  double h = 0;
  if (!a.function.empty()) {
    const auto b = builtin(a.function);
    if (!b) throw UsageError("unknown --function '" + a.function + "' (exp-sin3 | sin | bump)");
    h = 1.0 / double(a.n);
    for (std::size_t j = 0; j < a.n; ++j) {
      f.push_back(b->f(double(j) * h));
      df.push_back(b->df(double(j) * h));
    }
  } else {
    require_file(a.signal, "signal file");
    const auto rowsv = read_numbers(a.signal);
    const std::size_t cols = rowsv.front().size();
    for (const auto& r : rowsv) {
      if (r.size() != cols) throw FormatError(a.signal.string() + ": ragged rows");
    }
    if (cols == 1) {
      for (const auto& r : rowsv) f.push_back(r[0]);
      h = 1.0 / double(f.size());
    } else {
      for (const auto& r : rowsv) f.push_back(r[1]);
      if (cols >= 3) {
        for (const auto& r : rowsv) df.push_back(r[2]);
      }
      h = rowsv.size() > 1 ? rowsv[1][0] - rowsv[0][0] : 1.0;
      if (!(h > 0)) throw FormatError(a.signal.string() + ": x column must increase");
    }
  }
  const std::size_t n = f.size();
  std::optional<ExtensionOperator> op;
  if (a.method != "none") {
    ExtensionMethod m;
    try {
      m = parse_extension_method(a.method);
    } catch (const ShapeError& e) {
      throw UsageError(e.what());
    }
    op = build_operator(m, a.d, a.c, n, a.s, a.seminorm);
  }
  const std::vector<double> g = op ? extend_1d(f, *op) : f;
  {
    auto os = open_out(a.output);
    os << "index,value,interior\n";
    const std::size_t lead = op ? op->c / 2 : 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      os << i << ',' << num(g[i]) << ',' << (i >= lead && i < lead + n ? 1 : 0) << '\n';
    }
    footer(os, ctx.invocation);
  }
  const double seam = seam_all(g, n, op ? op->c : 0);
  std::ostringstream m;
  m << "metric,value\n";
  m << "method," << a.method << '\n';
  m << "n," << n << '\n';
  m << "c," << (op ? op->c : 0) << '\n';
  m << "seam_jump," << num(seam) << '\n';
  ctx.out << "wrote " << a.output.string() << " (" << g.size() << " samples); seam jump " << short_num(seam) << '\n';
  if (a.compare) {
    if (df.size() != n) throw UsageError("--compare-derivative needs an exact derivative (third column or --function)");
    const double e = derivative_error(f, df, h, op ? &*op : nullptr);
    const double e_none = derivative_error(f, df, h, nullptr);
    const auto zp = build_zero_pad(op ? op->c : a.c);
    const double e_zero = derivative_error(f, df, h, &zp);
    m << "max_derivative_error," << num(e) << '\n';
    m << "max_derivative_error_none," << num(e_none) << '\n';
    m << "max_derivative_error_zero_pad," << num(e_zero) << '\n';
    m << "ratio_none," << num(e_none / e) << '\n';
    m << "ratio_zero_pad," << num(e_zero / e) << '\n';
    ctx.out << "max derivative error " << short_num(e) << " (none " << short_num(e_none) << ", ratio "
            << short_num(e_none / e) << "; zero pad " << short_num(e_zero) << ", ratio " << short_num(e_zero / e)
            << ")\n";
  }
  footer(m, ctx.invocation);
  if (!a.metrics.empty()) open_out(a.metrics) << m.str();
}

// ---- report ----------------------------------------------------------------

struct ReportArgs {
  fs::path history;
  fs::path output = "report.svg";
  bool log_y = false;
  std::string x;
  std::string title;
};

void cmd_report(const ReportArgs& a, Context& ctx) {
  require_file(a.history, "CSV file");
  const CsvTable t = read_csv(a.history);
  SvgOptions o;
  o.log_y = a.log_y;
  o.title = a.title.empty() ? a.history.filename().string() : a.title;
  if (!a.x.empty()) {
    const auto it = std::find(t.header.begin(), t.header.end(), a.x);
    if (it == t.header.end()) throw UsageError("no column named '" + a.x + "'");
    o.x_column = std::size_t(it - t.header.begin());
  }
  open_out(a.output) << render_svg(t, o);
  ctx.out << "wrote " << a.output.string() << ": " << t.header.size() - 1 << " series, " << t.rows.size()
          << " points each\n";
}

std::string join_invocation(const std::vector<std::string>& args) {
  std::string s = "sok";
  for (const auto& a : args) {
    s += ' ';
    if (a.find_first_of(" \t\"'") != std::string::npos) {
      s += '"' + a + '"';
    } else {
      s += a;
    }
  }
  return s;
}

}  // namespace

// ---- INI / CSV / SVG ---------------------------------------------------------

std::vector<IniEntry> parse_ini(std::istream& is) {
  std::vector<IniEntry> out;
  std::string section;
  int no = 0;
  for (std::string line; std::getline(is, line);) {
    ++no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError("config line " + std::to_string(no) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("config line " + std::to_string(no) + ": expected key = value");
    std::string value = trim(line.substr(eq + 1));
    if (const auto hash = value.find(" #"); hash != std::string::npos) value = trim(value.substr(0, hash));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty()) throw FormatError("config line " + std::to_string(no) + ": empty key");
    out.push_back({section, key, value, no});
  }
  return out;
}

std::vector<IniEntry> read_ini(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read config " + path.string());
  return parse_ini(is);
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read " + path.string());
  CsvTable t;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line[0] == '#') {
      t.comments.push_back(line);
      continue;
    }
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw FormatError(path.string() + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(t.header.size()));
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      if (c.empty()) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      row.push_back(end != c.c_str() && *end == '\0' ? v : std::numeric_limits<double>::quiet_NaN());
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty() || t.rows.empty()) throw FormatError(path.string() + ": no data rows");
  if (t.header.size() < 2) throw FormatError(path.string() + ": need an x column and at least one series");
  return t;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

// 1, 2, 5 x 10^k steps giving about `target` ticks
std::vector<double> linear_ticks(double lo, double hi, int target = 6) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) t.push_back(std::abs(v) < 1e-14 * step ? 0 : v);
  return t;
}

}  // namespace

std::string render_svg(const CsvTable& table, const SvgOptions& opt) {
  const std::size_t xs = opt.x_column;
  if (xs >= table.header.size()) throw ShapeError("render_svg: x column out of range");
  const double left = 70, right = 170, top = 40, bottom = 50;
  const double W = opt.width, H = opt.height;
  const double pw = W - left - right, ph = H - top - bottom;
  auto ok = [&](double v) { return std::isfinite(v) && (!opt.log_y || v > 0); };
  auto ty = [&](double v) { return opt.log_y ? std::log10(v) : v; };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& r : table.rows) {
    if (!std::isfinite(r[xs])) continue;
    x0 = std::min(x0, r[xs]);
    x1 = std::max(x1, r[xs]);
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c == xs || !ok(r[c])) continue;
      y0 = std::min(y0, ty(r[c]));
      y1 = std::max(y1, ty(r[c]));
    }
  }
  if (!std::isfinite(x0)) throw ShapeError("render_svg: no finite x values");
  if (!std::isfinite(y0)) {
    y0 = 0;
    y1 = 1;
  }
  if (opt.log_y) {
    y0 = std::floor(y0);
    y1 = std::ceil(y1);
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) {
    y0 -= opt.log_y ? 1 : 0.5;
    y1 += opt.log_y ? 1 : 0.5;
  }
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1 - (y - y0) / (y1 - y0)) * ph; };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(opt.title)
    << "</text>\n";
  s << "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph << "\"/>\n";
  s << "</g>\n<g class=\"ticks\">\n";
  for (double v : linear_ticks(x0, x1)) {
    s << "<line x1=\"" << px(v) << "\" y1=\"" << top + ph << "\" x2=\"" << px(v) << "\" y2=\"" << top + ph + 5
      << "\" stroke=\"black\"/>";
    s << "<text class=\"xtick\" x=\"" << px(v) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
      << short_num(v) << "</text>\n";
  }
  std::vector<double> yt;
  if (opt.log_y) {
    for (double e = y0; e <= y1 + 1e-9; e += 1) yt.push_back(e);
  } else {
    yt = linear_ticks(y0, y1);
  }
  for (double v : yt) {
    const std::string label = opt.log_y ? "1e" + std::to_string(long(std::lround(v))) : short_num(v);
    s << "<line x1=\"" << left - 5 << "\" y1=\"" << py(v) << "\" x2=\"" << left + pw << "\" y2=\"" << py(v)
      << "\" stroke=\"#dddddd\"/>";
    s << "<text class=\"ytick\" x=\"" << left - 8 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << label
      << "</text>\n";
  }
  s << "</g>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">"
    << xml_escape(table.header[xs]) << "</text>\n";
  std::size_t series = 0;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == xs) continue;
    const char* color = palette[series % 10];
    s << "<polyline class=\"series\" data-name=\"" << xml_escape(table.header[c]) << "\" fill=\"none\" stroke=\""
      << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (const auto& r : table.rows) {
      if (!std::isfinite(r[xs]) || !ok(r[c])) continue;
      s << (first ? "" : " ") << px(r[xs]) << ',' << py(ty(r[c]));
      first = false;
    }
    s << "\"/>\n";
    const double ly = top + 14 + 18 * double(series);
    s << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>";
    s << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly << "\">" << xml_escape(table.header[c]) << "</text>\n";
    ++series;
  }
  s << "</svg>\n";
  return s.str();
}

// ---- entry point -------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spectral operator learning toolkit", "sok"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  Context ctx{join_invocation(args), out, err};

  std::map<CLI::App*, std::string> configs;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", configs[sub], "key = value file; command-line flags win");
  };
  std::uint64_t seed = 0;
  std::map<CLI::App*, CLI::Option*> seed_opts;
  auto add_seed = [&](CLI::App* sub) { seed_opts[sub] = sub->add_option("--seed", seed, "seed (fallback: SOK_SEED)"); };

  // gen
  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "generate a dataset");
  gen->add_option("--problem", ga.spec.problem)->check(CLI::IsMember({"heat", "poisson", "burgers"}));
  gen->add_option("-n,--n", ga.spec.samples, "samples")->check(CLI::PositiveNumber);
  gen->add_option("--n-train", ga.spec.n_train, "training split size (0: all)");
  gen->add_option("--res", ga.spec.grf.resolution);
  gen->add_option("--dim", ga.dim)->check(CLI::Range(1, 2));
  gen->add_option("--length", ga.length);
  gen->add_option("--nu", ga.spec.nu);
  gen->add_option("--t", ga.spec.t);
  gen->add_option("--dt", ga.spec.dt);
  gen->add_option("--steps", ga.spec.steps);
  gen->add_option("--gamma", ga.spec.grf.gamma);
  gen->add_option("--kmax", ga.spec.grf.k_max);
  gen->add_option("--amplitude", ga.spec.grf.amplitude);
  gen->add_option("--downsample", ga.downsample, "stride | spectral | lowpass-stride | mean-pool | max-pool | linear");
  gen->add_option("--factor", ga.factor)->check(CLI::PositiveNumber);
  gen->add_flag("--f32", ga.f32);
  gen->add_option("-o,--output", ga.output);
  add_seed(gen);
  add_config(gen);

  // train
  TrainArgs ta;
  ta.tc.optimizer.lr = 3e-3;
  auto* tr = app.add_subcommand("train", "train an FNO");
  tr->add_option("--data", ta.data);
  tr->add_option("-o,--output", ta.output);
  tr->add_option("--history", ta.history);
  tr->add_option("--modes", ta.modes)->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  tr->add_option("--max-modes", ta.max_modes)->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  tr->add_option("--width", ta.width);
  tr->add_option("--layers", ta.layers);
  tr->add_option("--lifting-ratio", ta.lifting_ratio);
  tr->add_option("--projection-ratio", ta.projection_ratio);
  tr->add_option("--mlp-expansion", ta.mlp_expansion);
  tr->add_option("--activation", ta.activation);
  tr->add_option("--fno-skip", ta.fno_skip);
  tr->add_option("--mlp-skip", ta.mlp_skip);
  tr->add_option("--factorization", ta.factorization);
  tr->add_option("--rank", ta.rank);
  tr->add_option("--norm", ta.norm);
  tr->add_option("--padding", ta.padding)->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  tr->add_option("--epochs", ta.tc.epochs);
  tr->add_option("--batch", ta.tc.batch_size)->check(CLI::PositiveNumber);
  tr->add_option("--loss", ta.loss, "lp-abs | lp-rel | h1-abs | h1-rel | weighted-lp | spectral");
  tr->add_option("--p", ta.tc.loss.p);
  tr->add_option("--optimizer", ta.optimizer);
  tr->add_option("--lr", ta.tc.optimizer.lr);
  tr->add_option("--momentum", ta.tc.optimizer.momentum);
  tr->add_option("--weight-decay", ta.tc.optimizer.weight_decay);
  tr->add_option("--schedule", ta.schedule, "constant | step | cosine");
  tr->add_option("--step-size", ta.tc.optimizer.step_size);
  tr->add_option("--decay", ta.tc.optimizer.gamma);
  tr->add_option("--min-lr", ta.tc.optimizer.min_lr);
  tr->add_option("--physics-weight", ta.tc.physics_weight);
  tr->add_option("--balancer", ta.balancer, "fixed | softadapt | relobralo");
  tr->add_option("--tau", ta.tc.balancer.tau);
  tr->add_option("--alpha", ta.tc.balancer.alpha);
  tr->add_option("--rho", ta.tc.balancer.rho_prob);
  tr->add_flag("--ifno", ta.ifno, "grow n_modes during training");
  tr->add_option("--ifno-criterion", ta.ifno_criterion, "explained | stagnation");
  tr->add_option("--ifno-alpha", ta.ifno_schedule.alpha_ratio);
  tr->add_option("--ifno-window", ta.ifno_schedule.window);
  tr->add_option("--ifno-eps", ta.ifno_schedule.eps_improve);
  tr->add_option("--ifno-increment", ta.ifno_schedule.increment);
  tr->add_option("--ifno-every", ta.ifno_schedule.check_every);
  tr->add_option("--ladder", ta.ifno_schedule.resolution_ladder)
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  tr->add_flag("--no-normalize", ta.no_normalize);
  tr->add_flag("--no-shuffle", ta.no_shuffle);
  add_seed(tr);
  add_config(tr);

  // eval
  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "per-sample metrics of a checkpoint on a dataset");
  ev->add_option("--ckpt", ea.ckpt);
  ev->add_option("--data", ea.data);
  ev->add_option("-o,--output", ea.output);
  ev->add_option("--split", ea.split)->check(CLI::IsMember({"all", "train", "test"}));
  add_config(ev);

  // superres
  SuperresArgs sa;
  auto* sr = app.add_subcommand("superres", "compare predictions across resolutions");
  sr->add_option("--ckpt", sa.ckpt);
  sr->add_option("--data", sa.data, "fine-resolution dataset");
  sr->add_option("-o,--output", sa.output);
  sr->add_option("--coarse-res", sa.coarse)->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  sr->add_option("--split", sa.split)->check(CLI::IsMember({"all", "train", "test"}));
  sr->add_option("--max-ratio", sa.max_ratio, "fail when fine/coarse error exceeds this");
  add_config(sr);

  // rollout
  RolloutArgs ra;
  auto* ro = app.add_subcommand("rollout", "apply a model recursively");
  ro->add_option("--ckpt", ra.ckpt);
  ro->add_option("--u0", ra.u0, "FNOD dataset or text file of values");
  ro->add_option("--steps", ra.steps);
  ro->add_option("--sample", ra.sample);
  ro->add_flag("--residual", ra.residual, "state += prediction");
  ro->add_option("-o,--output", ra.output);
  ro->add_option("--errors", ra.errors);
  ro->add_option("--reference", ra.reference)->check(CLI::IsMember({"auto", "heat", "none"}));
  ro->add_option("--nu", ra.nu);
  ro->add_option("--dt", ra.dt);
  ro->add_option("--length", ra.length);
  add_config(ro);

  // diagnose
  DiagnoseArgs da;
  auto* dg = app.add_subcommand("diagnose", "spectral hygiene report for a dataset");
  dg->add_option("--data", da.data);
  dg->add_option("-o,--output", da.output);
  dg->add_option("--energy", da.energy)->check(CLI::Range(0.0, 1.0));
  dg->add_option("--tolerance", da.tolerance);
  add_config(dg);

  // extend
  ExtendArgs xa;
  auto* ex = app.add_subcommand("extend", "periodic extension of a non-periodic signal");
  ex->add_option("--signal", xa.signal, "columns: f | x,f | x,f,df");
  ex->add_option("--function", xa.function, "exp-sin3 | sin | bump sampled on [0, 1)");
  ex->add_option("--n", xa.n);
  ex->add_option("--method", xa.method, "none | zero | mirror | fc-legendre | fc-gram | spectrum-opt")
      ->check(CLI::IsMember({"none", "zero", "zero-pad", "mirror", "mirror-pad", "fc-legendre", "legendre", "fc-gram",
                             "gram", "spectrum-opt", "hs"}));
  ex->add_option("-d,--d", xa.d);
  ex->add_option("-c,--c", xa.c);
  ex->add_option("-s,--s", xa.s);
  ex->add_flag("--seminorm", xa.seminorm);
  ex->add_flag("--compare-derivative", xa.compare);
  ex->add_option("-o,--output", xa.output);
  ex->add_option("--metrics", xa.metrics);
  add_config(ex);

  // report
  ReportArgs pa;
  auto* rp = app.add_subcommand("report", "SVG line plots from a CSV");
  rp->add_option("--history", pa.history, "CSV with a header row");
  rp->add_option("-o,--output", pa.output);
  rp->add_flag("--log", pa.log_y, "log-scale y axis");
  rp->add_option("--x", pa.x, "x column (default: first)");
  rp->add_option("--title", pa.title);
  add_config(rp);

  std::vector<const char*> argv{"sok"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (!configs[sub].empty()) apply_config(sub, configs[sub]);
    if (seed_opts.count(sub)) seed = resolve_seed(seed_opts[sub], seed);
    if (sub == gen) {
      if (ga.output.empty()) throw UsageError("gen: --output is required");
      ga.spec.grf.seed = seed;
      cmd_gen(ga, ctx);
    } else if (sub == tr) {
      ta.tc.seed = seed;
      cmd_train(ta, ctx);
    } else if (sub == ev) {
      cmd_eval(ea, ctx);
    } else if (sub == sr) {
      cmd_superres(sa, ctx);
    } else if (sub == ro) {
      cmd_rollout(ra, ctx);
    } else if (sub == dg) {
      cmd_diagnose(da, ctx);
    } else if (sub == ex) {
      cmd_extend(xa, ctx);
    } else if (sub == rp) {
      cmd_report(pa, ctx);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kUsage;
  } catch (const ShapeError& e) {
    err << "invalid arguments: " << e.what() << '\n';
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationFailure& e) {
    err << "check failed: " << e.what() << '\n';
    return kFailure;
  } catch (const NyquistError& e) {
    err << "nyquist: " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace sok::cli
