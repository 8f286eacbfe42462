#include "fusemap/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fusemap/cost_model.hpp"
#include "fusemap/hash.hpp"
#include "fusemap/mapper.hpp"
#include "fusemap/search.hpp"
#include "fusemap/training.hpp"
#include "fusemap/units.hpp"

#ifndef FUSEMAP_VERSION
#define FUSEMAP_VERSION "0.0.0"
#endif

namespace fusemap {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string mib(Bytes b) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << static_cast<double>(b) / (1 << 20) << " MiB";
  return os.str();
}

bool is_builtin_ref(const std::string& ref) {
  if (ref.starts_with("builtin:")) return true;
  const auto& names = builtin_names();
  return std::find(names.begin(), names.end(), ref) != names.end() && !fs::exists(ref);
}

/// One run's manifest: resolved config, seeds, hashed inputs and outputs.
class Run {
 public:
  Run(std::string command, const std::vector<std::string>& args, fs::path out_dir)
      : command_(std::move(command)), args_(args), out_dir_(std::move(out_dir)), start_(Clock::now()) {
    fs::create_directories(out_dir_);
  }

  json& config() { return config_; }
  json& seeds() { return seeds_; }
  json& timing() { return timing_; }
  const fs::path& dir() const { return out_dir_; }

  void input_file(const std::string& path) { inputs_.push_back({{"name", path}, {"sha256", sha256_file(path)}}); }

  void input_workload(const std::string& ref, const Workload& w) {
    if (is_builtin_ref(ref)) {
      inputs_.push_back({{"name", "builtin:" + w.name}, {"sha256", sha256_hex(workload_to_json(w))}});
    } else {
      input_file(ref);
    }
  }

  fs::path write(const std::string& name, std::string_view content) {
    const fs::path path = out_dir_ / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    outputs_.push_back(path.string());
    return path;
  }

  void add_output(const fs::path& path) { outputs_.push_back(path.string()); }

  void finish() {
    json manifest = {{"tool", "fusemap"},
                     {"version", FUSEMAP_VERSION},
                     {"command", command_},
                     {"argv", args_},
                     {"config", config_},
                     {"seeds", seeds_},
                     {"inputs", inputs_},
                     {"outputs", outputs_},
                     {"timing", timing_},
                     {"wall_time", seconds_since(start_)}};
    const fs::path path = out_dir_ / "manifest.json";
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << manifest.dump(2) << '\n';
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  fs::path out_dir_;
  Clock::time_point start_;
  json config_ = json::object();
  json seeds_ = json::object();
  json timing_ = json::object();
  json inputs_ = json::array();
  std::vector<std::string> outputs_;
};

struct AccelArgs {
  std::string pes = "1024";
  std::string buffer = "64MiB";
  std::string bw_off = "900GB/s";
  std::string bw_on = "9000GB/s";
  std::string freq = "1GHz";
  bool double_buffer = false;

  void attach(CLI::App* app) {
    app->add_option("--pes", pes, "processing elements")->capture_default_str();
    app->add_option("--buffer", buffer, "on-chip buffer size (e.g. 64MiB)")->capture_default_str();
    app->add_option("--bw-off", bw_off, "off-chip bandwidth (e.g. 900GB/s)")->capture_default_str();
    app->add_option("--bw-on", bw_on, "on-chip bandwidth")->capture_default_str();
    app->add_option("--freq", freq, "clock frequency (e.g. 1GHz)")->capture_default_str();
    app->add_flag("--double-buffer", double_buffer, "double-buffer staged activations");
  }

  AcceleratorConfig resolve() const {
    AcceleratorConfig a;
    a.pes = static_cast<Count>(parse_size(pes));
    a.onchip_buffer = parse_size(buffer);
    a.bw_off = parse_bandwidth(bw_off);
    a.bw_on = parse_bandwidth(bw_on);
    a.freq = parse_frequency(freq);
    a.double_buffer = double_buffer;
    a.validate();
    return a;
  }
};

json accel_json(const AcceleratorConfig& a) {
  return {{"pes", a.pes},       {"onchip_buffer", a.onchip_buffer}, {"bw_off", a.bw_off},
          {"bw_on", a.bw_on},   {"freq", a.freq},                   {"double_buffer", a.double_buffer}};
}

struct GaArgs {
  GaConfig cfg;
  void attach(CLI::App* app) {
    app->add_option("--population", cfg.population, "GA population size")->capture_default_str();
    app->add_option("--generations", cfg.generations, "GA generations")->capture_default_str();
    app->add_option("--elite-fraction", cfg.elite_fraction)->capture_default_str();
    app->add_option("--mutation-rate", cfg.mutation_rate)->capture_default_str();
    app->add_option("--crossover-rate", cfg.crossover_rate)->capture_default_str();
    app->add_option("--tournament", cfg.tournament)->capture_default_str();
  }
};

json ga_json(const GaConfig& g) {
  return {{"population", g.population},         {"generations", g.generations}, {"elite_fraction", g.elite_fraction},
          {"mutation_rate", g.mutation_rate},   {"crossover_rate", g.crossover_rate},
          {"tournament", g.tournament}};
}

Bytes budget_or_buffer(const std::string& budget, const AcceleratorConfig& accel) {
  return budget.empty() ? accel.onchip_buffer : parse_size(budget);
}

std::vector<Action> parse_action_list(const std::string& text) {
  std::vector<Action> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "sync" || item == "Sync" || item == "-1") {
      out.push_back(Action::sync());
    } else {
      try {
        std::size_t used = 0;
        const long long mb = std::stoll(item, &used);
        if (used != item.size() || mb < 1) throw std::invalid_argument(item);
        out.push_back(Action::micro_batch(mb));
      } catch (const std::exception&) {
        throw std::invalid_argument("--actions: '" + item + "' is neither sync nor a positive micro-batch");
      }
    }
  }
  if (out.empty()) throw std::invalid_argument("--actions: empty list");
  return out;
}

std::string summary_line(const CostReport& r, double speedup) {
  std::ostringstream os;
  os << std::setprecision(6) << "speedup " << speedup << "x  latency " << r.latency << " s  peak "
     << mib(r.peak_onchip) << " / " << mib(r.mem_budget) << "  " << (r.valid ? "valid" : "INVALID (over budget)");
  return os.str();
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string workload, strategy, budget, out;
  std::optional<Count> batch;
  AccelArgs accel;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const Workload w = resolve_workload(a.workload);
  const AcceleratorConfig accel = a.accel.resolve();
  const Bytes budget = budget_or_buffer(a.budget, accel);
  CostModel model(w, accel);
  Strategy s;
  if (a.strategy == "no_fusion") {
    s = no_fusion(w, a.batch.value_or(64));
  } else if (a.strategy == "uniform") {
    s = uniform_microbatch(model, a.batch.value_or(64), budget);
  } else {
    s = load_strategy(a.strategy).first;
    if (a.batch && *a.batch != s.batch) {
      throw ValidationError("--batch " + std::to_string(*a.batch) + " does not match the strategy batch " +
                            std::to_string(s.batch));
    }
  }
  const CostReport report = model.evaluate(s, budget);
  const double speedup = model.baseline_latency(s.batch) / report.latency;
  const std::string text = report_to_json(report, speedup);
  out << text;
  if (!a.out.empty()) {
    Run run("eval", argv, a.out);
    run.input_workload(a.workload, w);
    if (a.strategy != "no_fusion" && a.strategy != "uniform") run.input_file(a.strategy);
    run.config() = {{"accelerator", accel_json(accel)}, {"budget", budget}, {"batch", s.batch}, {"strategy", a.strategy}};
    run.write("report.json", text);
    run.finish();
  }
  return report.valid ? 0 : 2;
}

// ---------------------------------------------------------------- search

struct SearchArgs {
  std::string workload, budget, algo = "ga", actions, out = "out";
  Count batch = 64;
  std::uint64_t seed = 0;
  long samples = 0;
  int threads = 0;
  GaArgs ga;
  AccelArgs accel;
};

int cmd_search(const SearchArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const Workload w = resolve_workload(a.workload);
  const AcceleratorConfig accel = a.accel.resolve();
  CostModel model(w, accel);
  SearchOptions opt;
  opt.batch = a.batch;
  opt.mem_budget = budget_or_buffer(a.budget, accel);
  opt.threads = a.threads;
  if (!a.actions.empty()) opt.actions = parse_action_list(a.actions);
  GaConfig ga = a.ga.cfg;
  ga.seed = a.seed;
  const long samples = a.samples > 0 ? a.samples : ga.sample_budget();

  SearchResult result;
  if (a.algo == "ga") {
    result = ga_search(model, opt, ga);
  } else if (a.algo == "random") {
    result = random_search(model, opt, samples, a.seed);
  } else {
    result = brute_force(model, opt);
  }
  const double speedup = model.baseline_latency(a.batch) / result.best_report.latency;

  Run run("search", argv, a.out);
  run.input_workload(a.workload, w);
  run.config() = {{"algorithm", a.algo},
                  {"accelerator", accel_json(accel)},
                  {"budget", opt.mem_budget},
                  {"batch", a.batch},
                  {"ga", ga_json(ga)},
                  {"random_samples", samples},
                  {"threads", resolve_threads(a.threads)},
                  {"actions", a.actions.empty() ? json(nullptr) : json(a.actions)}};
  run.seeds() = {{"search", a.seed}};
  run.timing() = {{"search_seconds", result.wall_time}};
  run.write("strategy.json", strategy_to_json(result.best, w.name));
  run.write("result.json", search_result_to_json(result, w.name));
  run.write("history.csv", history_to_csv(result));
  run.finish();
  out << a.algo << ": " << summary_line(result.best_report, speedup) << "  samples " << result.samples_used << "  ("
      << std::setprecision(3) << result.wall_time << " s)\n";
  return 0;
}

// ---------------------------------------------------------------- dataset

struct DatasetArgs {
  std::vector<std::string> workloads;
  std::string budgets = "16MiB,32MiB,48MiB,64MiB", out = "out";
  Count batch = 64;
  std::size_t top_k = 8;
  std::uint64_t seed = 0;
  int threads = 0;
  GaArgs ga;
  AccelArgs accel;
};

std::vector<Bytes> parse_budget_list(const std::string& text) {
  std::vector<Bytes> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(item));
  if (out.empty()) throw std::invalid_argument("--budgets: empty list");
  return out;
}

int cmd_dataset(const DatasetArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  const AcceleratorConfig accel = a.accel.resolve();
  seq::DatasetOptions opt;
  opt.batch = a.batch;
  opt.budgets = parse_budget_list(a.budgets);
  opt.top_k = a.top_k;
  opt.threads = a.threads;
  opt.ga = a.ga.cfg;

  Run run("dataset", argv, a.out);
  std::vector<seq::Trajectory> all;
  json per_workload = json::object();
  for (std::size_t i = 0; i < a.workloads.size(); ++i) {
    const Workload w = resolve_workload(a.workloads[i]);
    run.input_workload(a.workloads[i], w);
    CostModel model(w, accel);
    opt.ga.seed = a.seed + 1000 * i;
    const auto result = seq::gen_dataset(model, opt, [&](const std::string& msg) { err << "warning: " << w.name << ": " << msg << '\n'; });
    per_workload[w.name] = {{"trajectories", result.trajectories.size()}, {"ga_seed", opt.ga.seed},
                            {"skipped_budgets", result.skipped_budgets}, {"samples", result.samples_used}};
    all.insert(all.end(), result.trajectories.begin(), result.trajectories.end());
  }
  if (all.empty()) throw std::runtime_error("no valid strategy found for any budget; dataset would be empty");
  std::ostringstream lines;
  seq::write_dataset(lines, all);
  run.config() = {{"accelerator", accel_json(accel)}, {"budgets", opt.budgets}, {"batch", a.batch},
                  {"top_k", a.top_k}, {"ga", ga_json(a.ga.cfg)}, {"encoding", opt.encoding}, {"per_workload", per_workload}};
  run.seeds() = {{"base", a.seed}};
  const auto path = run.write("dataset.jsonl", lines.str());
  run.finish();
  out << "wrote " << all.size() << " trajectories to " << path.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- train / finetune

std::vector<seq::Trajectory> load_datasets(const std::vector<std::string>& paths, Run& run) {
  std::vector<seq::Trajectory> all;
  for (const auto& p : paths) {
    auto part = seq::load_dataset(p);
    run.input_file(p);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

std::string loss_csv(const std::vector<double>& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,loss\n";
  for (std::size_t e = 0; e < curve.size(); ++e) os << e << ',' << curve[e] << '\n';
  return os.str();
}

seq::ProgressFn progress_printer(std::ostream& err, int every, int total) {
  if (every <= 0) return {};
  return [&err, every, total](int epoch, double loss) {
    if (epoch % every == 0 || epoch == total) err << "epoch " << epoch << "/" << total << "  loss " << loss << '\n';
  };
}

struct TrainArgs {
  std::vector<std::string> datasets;
  std::string out = "out";
  seq::TrainConfig cfg;
  int log_every = 100;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Run run("train", argv, a.out);
  const auto data = load_datasets(a.datasets, run);
  if (data.empty()) throw seq::TrainingError("empty dataset");
  const auto start = Clock::now();
  const auto result = seq::train(data, a.cfg, {}, progress_printer(err, a.log_every, a.cfg.epochs));
  const auto& m = a.cfg.model;
  run.config() = {{"model", {{"blocks", m.blocks}, {"heads", m.heads}, {"dim", m.dim}, {"max_timesteps", m.max_timesteps},
                             {"dropout", m.dropout}}},
                  {"epochs", a.cfg.epochs}, {"lr", a.cfg.lr}, {"minibatch", a.cfg.minibatch},
                  {"grad_clip", a.cfg.grad_clip}, {"trajectories", data.size()}};
  run.seeds() = {{"train", a.cfg.seed}};
  run.timing() = {{"train_seconds", seconds_since(start)}};
  const fs::path model_path = run.dir() / "model.dnfz";
  seq::save_checkpoint(result.checkpoint, model_path);
  run.add_output(model_path);
  run.write("loss.csv", loss_csv(result.loss_curve));
  run.finish();
  out << std::setprecision(10) << "trained " << a.cfg.epochs << " epochs on " << data.size()
      << " trajectories; initial loss " << result.loss_curve.front() << ", final loss "
      << result.checkpoint.metadata.final_loss << "\nwrote " << model_path.string() << '\n';
  return 0;
}

struct FinetuneArgs {
  std::string checkpoint, out = "out";
  std::vector<std::string> datasets;
  seq::FineTuneConfig cfg;
  int log_every = 100;
};

int cmd_finetune(const FinetuneArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Run run("finetune", argv, a.out);
  const seq::Checkpoint parent = seq::load_checkpoint(a.checkpoint);
  const std::string parent_hash = sha256_file(a.checkpoint);
  run.input_file(a.checkpoint);
  const auto data = load_datasets(a.datasets, run);
  if (data.empty()) throw seq::TrainingError("empty dataset");
  const int epochs = seq::fine_tune_epochs(parent.metadata.epochs, a.cfg.epoch_fraction);
  const auto start = Clock::now();
  const auto result = seq::fine_tune(parent, parent_hash, data, a.cfg, progress_printer(err, a.log_every, epochs));
  run.config() = {{"epoch_fraction", a.cfg.epoch_fraction}, {"epochs", epochs}, {"parent_epochs", parent.metadata.epochs},
                  {"lr", a.cfg.lr}, {"minibatch", a.cfg.minibatch}, {"grad_clip", a.cfg.grad_clip},
                  {"parent_sha256", parent_hash}, {"trajectories", data.size()}};
  run.seeds() = {{"finetune", a.cfg.seed}};
  run.timing() = {{"train_seconds", seconds_since(start)}};
  const fs::path model_path = run.dir() / "model.dnfz";
  seq::save_checkpoint(result.checkpoint, model_path);
  run.add_output(model_path);
  run.write("loss.csv", loss_csv(result.loss_curve));
  run.finish();
  out << std::setprecision(10) << "fine-tuned " << epochs << " epochs; final loss " << result.checkpoint.metadata.final_loss
      << "\nwrote " << model_path.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
  std::string checkpoint, workload, budget, out = "out";
  Count batch = 64;
  AccelArgs accel;
};

int cmd_infer(const InferArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  const Workload w = resolve_workload(a.workload);
  const AcceleratorConfig accel = a.accel.resolve();
  const Bytes budget = budget_or_buffer(a.budget, accel);
  const seq::Checkpoint ck = seq::load_checkpoint(a.checkpoint);
  CostModel model(w, accel);
  const auto r = seq::infer(ck, model, a.batch, budget);
  if (r.budget_outside_training) {
    err << "warning: budget " << mib(budget) << " is outside the trained range [" << mib(ck.metadata.min_budget) << ", "
        << mib(ck.metadata.max_budget) << "]; extrapolation is unsupported\n";
  }
  if (ck.metadata.batch != 0 && ck.metadata.batch != a.batch) {
    err << "warning: model was trained at batch " << ck.metadata.batch << ", inferring at batch " << a.batch << '\n';
  }
  const double speedup = model.baseline_latency(a.batch) / r.report.latency;
  Run run("infer", argv, a.out);
  run.input_file(a.checkpoint);
  run.input_workload(a.workload, w);
  run.config() = {{"accelerator", accel_json(accel)}, {"budget", budget}, {"batch", a.batch}};
  run.timing() = {{"mapper_seconds", r.mapper_seconds}, {"cost_model_seconds", r.cost_model_seconds}};
  run.write("strategy.json", strategy_to_json(r.strategy, w.name));
  run.write("report.json", report_to_json(r.report, speedup));
  run.finish();
  out << "model: " << summary_line(r.report, speedup) << '\n'
      << std::setprecision(4) << "mapper wall-time " << r.mapper_seconds << " s (cost model " << r.cost_model_seconds
      << " s)\n";
  return 0;
}

// ---------------------------------------------------------------- compare

struct CompareArgs {
  std::string workload, checkpoint, budget, out = "out";
  Count batch = 64;
  std::uint64_t seed = 0;
  long samples = 0;
  int threads = 0;
  GaArgs ga;
  AccelArgs accel;
};

struct Row {
  std::string method;
  CostReport report;
  long samples = 0;
  double wall_time = 0;
};

int cmd_compare(const CompareArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const Workload w = resolve_workload(a.workload);
  const AcceleratorConfig accel = a.accel.resolve();
  CostModel model(w, accel);
  SearchOptions opt;
  opt.batch = a.batch;
  opt.mem_budget = budget_or_buffer(a.budget, accel);
  opt.threads = a.threads;
  GaConfig ga = a.ga.cfg;
  ga.seed = a.seed;
  const long samples = a.samples > 0 ? a.samples : ga.sample_budget();

  std::vector<Row> rows;
  auto timed_row = [&](const std::string& method, auto&& make) {
    const auto t0 = Clock::now();
    Strategy s = make();
    CostReport rep = model.evaluate(s, opt.mem_budget);
    rows.push_back({method, std::move(rep), 1, seconds_since(t0)});
  };
  timed_row("no_fusion", [&] { return no_fusion(w, a.batch); });
  {
    const auto t0 = Clock::now();
    Strategy s = uniform_microbatch(model, a.batch, opt.mem_budget);
    const double dt = seconds_since(t0);
    rows.push_back({"uniform", model.evaluate(s, opt.mem_budget), static_cast<long>(action_space(a.batch).size()), dt});
  }
  {
    const auto r = random_search(model, opt, samples, a.seed);
    rows.push_back({"random", r.best_report, r.samples_used, r.wall_time});
  }
  {
    const auto r = ga_search(model, opt, ga);
    rows.push_back({"ga", r.best_report, r.samples_used, r.wall_time});
  }
  Run run("compare", argv, a.out);
  run.input_workload(a.workload, w);
  if (!a.checkpoint.empty()) {
    const auto ck = seq::load_checkpoint(a.checkpoint);
    run.input_file(a.checkpoint);
    const auto r = seq::infer(ck, model, a.batch, opt.mem_budget);
    rows.push_back({"model", r.report, 1, r.mapper_seconds});
  }
  const double baseline = model.baseline_latency(a.batch);

  std::ostringstream csv, text;
  csv.precision(10);
  csv << "method,latency,peak,valid,speedup,samples,wall_time\n";
  text << std::left << std::setw(10) << "method" << std::right << std::setw(14) << "latency_s" << std::setw(14) << "peak_MiB"
       << std::setw(7) << "valid" << std::setw(10) << "speedup" << std::setw(9) << "samples" << std::setw(12) << "wall_s"
       << '\n';
  for (const auto& r : rows) {
    const double speedup = baseline / r.report.latency;
    csv << r.method << ',' << r.report.latency << ',' << r.report.peak_onchip << ',' << (r.report.valid ? 1 : 0) << ','
        << speedup << ',' << r.samples << ',' << r.wall_time << '\n';
    text << std::left << std::setw(10) << r.method << std::right << std::fixed << std::setprecision(6) << std::setw(14)
         << r.report.latency << std::setprecision(2) << std::setw(14) << static_cast<double>(r.report.peak_onchip) / (1 << 20)
         << std::setw(7) << (r.report.valid ? "yes" : "no") << std::setprecision(4) << std::setw(10) << speedup
         << std::setw(9) << r.samples << std::scientific << std::setprecision(3) << std::setw(12) << r.wall_time
         << std::defaultfloat << '\n';
  }
  run.config() = {{"accelerator", accel_json(accel)}, {"budget", opt.mem_budget}, {"batch", a.batch},
                  {"ga", ga_json(ga)}, {"random_samples", samples}};
  run.seeds() = {{"search", a.seed}};
  run.write("compare.csv", csv.str());
  run.write("compare.txt", text.str());
  run.finish();
  out << text.str();
  return 0;
}

// ---------------------------------------------------------------- grad-check

struct GradCheckArgs {
  int seeds = 5;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  seq::GradCheckOptions opt;
  bool zero_input = false;
};

int cmd_grad_check(const GradCheckArgs& a, std::ostream& out) {
  bool ok = true;
  for (int i = 0; i < a.seeds; ++i) {
    seq::GradCheckOptions o = a.opt;
    o.seed = a.seed + static_cast<std::uint64_t>(i);
    o.tolerance = a.tolerance;
    o.zero_input = a.zero_input;
    const auto r = seq::grad_check(o);
    ok = ok && r.passed;
    out << "seed " << o.seed << "  params " << r.checked << "  max_rel_error " << std::scientific << std::setprecision(3)
        << r.max_rel_error << std::defaultfloat << "  worst " << r.worst_tensor << "[" << r.worst_index << "]  "
        << (r.passed ? "pass" : "FAIL") << '\n';
  }
  out << (ok ? "gradient check passed" : "gradient check FAILED") << " (tolerance " << a.tolerance << ")\n";
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------- zoo-list

int cmd_zoo_list(bool as_json, std::ostream& out) {
  json doc = json::array();
  std::ostringstream text;
  text << std::left << std::setw(14) << "name" << std::right << std::setw(8) << "layers" << std::setw(8) << "skips"
       << std::setw(12) << "GMACs" << std::setw(14) << "weights_MiB" << '\n';
  for (const auto& name : builtin_names()) {
    const Workload w = builtin(name);
    Count total_macs = 0, skips = 0;
    Bytes weights = 0;
    for (const auto& l : w.layers) {
      total_macs += macs(l, 1);
      weights += weight_bytes(l, w.bytes_per_element);
      skips += l.skip_from ? 1 : 0;
    }
    doc.push_back({{"name", name}, {"layers", w.size()}, {"skip_edges", skips}, {"macs", total_macs}, {"weight_bytes", weights}});
    text << std::left << std::setw(14) << name << std::right << std::setw(8) << w.size() << std::setw(8) << skips
         << std::fixed << std::setprecision(3) << std::setw(12) << static_cast<double>(total_macs) / 1e9 << std::setprecision(2)
         << std::setw(14) << static_cast<double>(weights) / (1 << 20) << std::defaultfloat << '\n';
  }
  out << (as_json ? doc.dump(2) + "\n" : text.str());
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fusemap: layer-fusion mapping for DNN accelerators"};
  app.set_version_flag("--version", std::string(FUSEMAP_VERSION));
  app.require_subcommand(1);

  EvalArgs eval;
  auto* s_eval = app.add_subcommand("eval", "evaluate a strategy with the cost model");
  s_eval->add_option("workload", eval.workload, "builtin:<name>, zoo name, or workload JSON")->required();
  s_eval->add_option("strategy", eval.strategy, "strategy JSON, or no_fusion / uniform")->required();
  s_eval->add_option("--budget", eval.budget, "on-chip memory budget (default: buffer size)");
  s_eval->add_option("--batch", eval.batch, "batch for no_fusion / uniform (default 64)");
  s_eval->add_option("--out", eval.out, "also write report.json and manifest.json here");
  eval.accel.attach(s_eval);

  SearchArgs search;
  auto* s_search = app.add_subcommand("search", "search for a fusion strategy");
  s_search->add_option("workload", search.workload)->required();
  s_search->add_option("--algo", search.algo)->check(CLI::IsMember({"ga", "random", "brute"}))->capture_default_str();
  s_search->add_option("--budget", search.budget, "on-chip memory budget (default: buffer size)");
  s_search->add_option("--batch", search.batch)->capture_default_str();
  s_search->add_option("--seed", search.seed)->capture_default_str();
  s_search->add_option("--samples", search.samples, "random-search samples (default: GA population x generations)");
  s_search->add_option("--actions", search.actions, "restrict genes, e.g. sync,2,4,8");
  s_search->add_option("--threads", search.threads, "fitness threads (0: FUSEMAP_THREADS or all cores)");
  s_search->add_option("--out", search.out)->capture_default_str();
  search.ga.attach(s_search);
  search.accel.attach(s_search);

  DatasetArgs dataset;
  auto* s_dataset = app.add_subcommand("dataset", "build a demonstration dataset from GA solutions");
  s_dataset->add_option("workloads", dataset.workloads)->required();
  s_dataset->add_option("--budgets", dataset.budgets, "comma-separated budgets")->capture_default_str();
  s_dataset->add_option("--top-k", dataset.top_k)->capture_default_str();
  s_dataset->add_option("--batch", dataset.batch)->capture_default_str();
  s_dataset->add_option("--seed", dataset.seed)->capture_default_str();
  s_dataset->add_option("--threads", dataset.threads);
  s_dataset->add_option("--out", dataset.out)->capture_default_str();
  dataset.ga.attach(s_dataset);
  dataset.accel.attach(s_dataset);

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "train the sequence model on datasets");
  s_train->add_option("datasets", train.datasets)->required();
  s_train->add_option("--epochs", train.cfg.epochs)->capture_default_str();
  s_train->add_option("--lr", train.cfg.lr)->capture_default_str();
  s_train->add_option("--minibatch", train.cfg.minibatch)->capture_default_str();
  s_train->add_option("--seed", train.cfg.seed)->capture_default_str();
  s_train->add_option("--grad-clip", train.cfg.grad_clip)->capture_default_str();
  s_train->add_option("--blocks", train.cfg.model.blocks)->capture_default_str();
  s_train->add_option("--heads", train.cfg.model.heads)->capture_default_str();
  s_train->add_option("--dim", train.cfg.model.dim)->capture_default_str();
  s_train->add_option("--max-timesteps", train.cfg.model.max_timesteps)->capture_default_str();
  s_train->add_option("--dropout", train.cfg.model.dropout)->capture_default_str();
  s_train->add_option("--log-every", train.log_every, "progress interval in epochs (0: silent)")->capture_default_str();
  s_train->add_option("--out", train.out)->capture_default_str();

  InferArgs infer;
  auto* s_infer = app.add_subcommand("infer", "decode a strategy with a trained model (no search)");
  s_infer->add_option("checkpoint", infer.checkpoint)->required();
  s_infer->add_option("workload", infer.workload)->required();
  s_infer->add_option("--budget", infer.budget, "on-chip memory budget (default: buffer size)");
  s_infer->add_option("--batch", infer.batch)->capture_default_str();
  s_infer->add_option("--out", infer.out)->capture_default_str();
  infer.accel.attach(s_infer);

  FinetuneArgs finetune;
  auto* s_finetune = app.add_subcommand("finetune", "continue training a checkpoint on new datasets");
  s_finetune->add_option("checkpoint", finetune.checkpoint)->required();
  s_finetune->add_option("datasets", finetune.datasets)->required();
  s_finetune->add_option("--epoch-fraction", finetune.cfg.epoch_fraction)->capture_default_str();
  s_finetune->add_option("--lr", finetune.cfg.lr)->capture_default_str();
  s_finetune->add_option("--minibatch", finetune.cfg.minibatch)->capture_default_str();
  s_finetune->add_option("--seed", finetune.cfg.seed)->capture_default_str();
  s_finetune->add_option("--grad-clip", finetune.cfg.grad_clip)->capture_default_str();
  s_finetune->add_option("--log-every", finetune.log_every)->capture_default_str();
  s_finetune->add_option("--out", finetune.out)->capture_default_str();

  CompareArgs compare;
  auto* s_compare = app.add_subcommand("compare", "tabulate baselines, searches and the model");
  s_compare->add_option("workload", compare.workload)->required();
  s_compare->add_option("--checkpoint", compare.checkpoint, "add a model row");
  s_compare->add_option("--budget", compare.budget);
  s_compare->add_option("--batch", compare.batch)->capture_default_str();
  s_compare->add_option("--seed", compare.seed)->capture_default_str();
  s_compare->add_option("--samples", compare.samples, "random-search samples (default: GA sample budget)");
  s_compare->add_option("--threads", compare.threads);
  s_compare->add_option("--out", compare.out)->capture_default_str();
  compare.ga.attach(s_compare);
  compare.accel.attach(s_compare);

  GradCheckArgs gc;
  auto* s_gc = app.add_subcommand("grad-check", "finite-difference check of the model gradients");
  s_gc->add_option("--seeds", gc.seeds)->capture_default_str();
  s_gc->add_option("--seed", gc.seed, "first seed")->capture_default_str();
  s_gc->add_option("--tolerance", gc.tolerance)->capture_default_str();
  s_gc->add_option("--step", gc.opt.step)->capture_default_str();
  s_gc->add_option("--dim", gc.opt.model.dim)->capture_default_str();
  s_gc->add_option("--blocks", gc.opt.model.blocks)->capture_default_str();
  s_gc->add_option("--heads", gc.opt.model.heads)->capture_default_str();
  s_gc->add_option("--steps", gc.opt.steps, "sequence length")->capture_default_str();
  s_gc->add_flag("--zero-input", gc.zero_input);

  bool zoo_json = false;
  auto* s_zoo = app.add_subcommand("zoo-list", "list built-in workloads");
  s_zoo->add_flag("--json", zoo_json);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*s_eval) return cmd_eval(eval, args, out);
    if (*s_search) return cmd_search(search, args, out);
    if (*s_dataset) return cmd_dataset(dataset, args, out, err);
    if (*s_train) return cmd_train(train, args, out, err);
    if (*s_infer) return cmd_infer(infer, args, out, err);
    if (*s_finetune) return cmd_finetune(finetune, args, out, err);
    if (*s_compare) return cmd_compare(compare, args, out);
    if (*s_gc) return cmd_grad_check(gc, out);
    if (*s_zoo) return cmd_zoo_list(zoo_json, out);
  } catch (const SearchSpaceTooLarge& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace fusemap
