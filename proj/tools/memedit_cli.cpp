// memedit: command-line front end for hyperplane discovery and latent editing.
//
// Every command writes its outputs plus one JSON manifest. `memedit replay
// <manifest>` re-runs the recorded invocation and reproduces the outputs.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "memedit/memedit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace memedit;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr const char* kSeedEnv = "MEMEDIT_SEED";

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kIo = 3,
  kFormat = 4,
  kValidation = 5,
  kDegenerate = 6,
  kNumeric = 7,
  kScorer = 8,
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return kIo;
    case ErrorKind::format: return kFormat;
    case ErrorKind::validation: return kValidation;
    case ErrorKind::degenerate: return kDegenerate;
    case ErrorKind::numeric: return kNumeric;
    case ErrorKind::scorer: return kScorer;
  }
  return kInternal;
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv(kSeedEnv)) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      fail(ErrorKind::validation, std::string(kSeedEnv) + " is not an unsigned integer");
    }
  }
  return 0;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_doubles(const std::string& text, const char* what) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) {
    double v = 0.0;
    if (!detail::parse_double(s, v))
      fail(ErrorKind::validation, std::string(what) + ": cannot parse '" + s + "'");
    out.push_back(v);
  }
  require(!out.empty(), std::string(what) + " is empty");
  return out;
}

std::set<std::size_t> parse_layers(const std::string& text) {
  std::set<std::size_t> out;
  for (const auto& s : split_list(text)) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      require(pos == s.size(), "bad layer index '" + s + "'");
      out.insert(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      fail(ErrorKind::validation, "bad layer index '" + s + "'");
    }
  }
  return out;
}

/// Attribute directions: hyperplane JSON files contribute their normal, LTM1
/// files contribute every row.
std::vector<std::vector<double>> load_directions(const std::vector<std::string>& paths) {
  std::vector<std::vector<double>> out;
  for (const auto& p : paths) {
    const std::string bytes = detail::read_file(p);
    if (bytes.rfind("LTM1", 0) == 0) {
      const Matrix m = decode_matrix(bytes);
      for (std::size_t i = 0; i < m.rows(); ++i)
        out.emplace_back(m.row(i).begin(), m.row(i).end());
    } else {
      json j;
      try {
        j = json::parse(bytes);
      } catch (const json::exception& e) {
        fail(ErrorKind::format, "'" + p + "': " + e.what());
      }
      out.push_back(hyperplane_from_json(j).normal);
    }
  }
  return out;
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory '" + parent.string() + "'");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory '" + dir + "'");
}

/// Collects what a run did and writes it next to the outputs.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  json inputs = json::object();
  json outputs = json::object();
  std::string started_at = utc_now();

  void write(const std::string& path) const {
    json j = {{"command", command},
              {"tool_version", kToolVersion},
              {"argv", argv},
              {"cwd", fs::current_path().string()},
              {"config", config},
              {"inputs", inputs},
              {"outputs", outputs},
              {"started_at", started_at},
              {"finished_at", utc_now()}};
    ensure_parent(path);
    detail::write_file(path, j.dump(2) + "\n");
  }
};

void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  detail::write_file(path, text);
}

Matrix as_rows(const Matrix& m) {
  if (m.ndim() == 2) return m;
  return m.reshaped({m.rows(), m.cols()});
}

std::optional<LayerStructure> layers_of(const Matrix& m) {
  if (m.ndim() == 3) return LayerStructure{m.shape()[1], m.shape()[2]};
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Commands. Each returns the manifest path it wrote.

struct SynthArgs {
  std::size_t dim = 512;
  std::size_t n = 1000;
  std::optional<std::uint64_t> seed;
  double sigma = 0.05;
  std::optional<double> psi;
  std::string layers;
  std::optional<std::size_t> sparse_layer;
  std::uint64_t stream = 0;
  std::string dtype = "f64";
  bool plain_projection = false;
  std::string out_dir = ".";
};

std::string run_synth(const SynthArgs& a, Manifest& man) {
  std::optional<LayerStructure> ls;
  if (!a.layers.empty()) ls = parse_layer_structure(a.layers);
  std::size_t dim = a.dim;
  if (ls) dim = ls->dim();
  const std::uint64_t seed = a.seed ? *a.seed : default_seed();
  const auto world = make_world(dim, seed, a.sigma, a.psi, ls, a.sparse_layer);
  Matrix x = sample_latents(world, SamplerConfig(a.n, std::nullopt, a.stream));
  const auto scores = score(world, x, false, a.stream);
  const DType dtype = a.dtype == "f32" ? DType::f32 : DType::f64;

  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  const auto latents_path = (dir / "latents.ltm").string();
  const auto scores_path = (dir / "scores.csv").string();
  const auto world_path = (dir / "world.json").string();
  if (ls) {
    Matrix shaped = x.reshaped({a.n, ls->layers, ls->per_layer_dim});
    shaped.set_dtype(dtype);
    save_matrix(shaped, latents_path);
  } else {
    x.set_dtype(dtype);
    save_matrix(x, latents_path);
  }
  save_scores(scores, scores_path);
  save_world(world, world_path);
  man.outputs = {{"latents", latents_path}, {"scores", scores_path}, {"world", world_path}};
  if (a.plain_projection) {
    require(ls.has_value(), "--plain-projection needs --layers");
    Matrix z = collapse_layers(x, *ls);
    z.set_dtype(dtype);
    const auto z_path = (dir / "plain_latents.ltm").string();
    save_matrix(z, z_path);
    man.outputs["plain_latents"] = z_path;
  }
  man.config = {{"dim", dim},        {"n", a.n},          {"seed", seed},
                {"sigma", a.sigma},  {"psi", a.psi ? json(*a.psi) : json(nullptr)},
                {"layers", ls ? json(ls->to_string()) : json(nullptr)},
                {"sparse_layer", a.sparse_layer ? json(*a.sparse_layer) : json(nullptr)},
                {"stream", a.stream}, {"dtype", a.dtype}};
  std::cout << "wrote " << a.n << " latents of dim " << dim << " to " << a.out_dir << "\n";
  return (dir / "manifest.json").string();
}

struct FitArgs {
  std::string latents;
  std::string scores;
  std::string threshold = "mean";
  double train_fraction = 0.8;
  std::optional<std::uint64_t> seed;
  FitConfig fit;
  bool no_standardize = false;
  std::string layers;
  std::string out;
};

LabeledDataset load_dataset(const std::string& latents_path, const std::string& scores_path,
                            ThresholdKind kind, const std::string& layers_flag) {
  const Matrix raw = load_matrix(latents_path);
  auto ls = layers_of(raw);
  if (!layers_flag.empty()) {
    const auto flag = parse_layer_structure(layers_flag);
    require(!ls || *ls == flag, "--layers disagrees with the latent file's shape");
    ls = flag;
  }
  auto scores = load_scores(scores_path);
  require(scores.size() == raw.rows(), "latents have " + std::to_string(raw.rows()) +
                                           " rows but scores have " +
                                           std::to_string(scores.size()));
  return LabeledDataset::from_scores(as_rows(raw), std::move(scores), kind, ls);
}

std::string run_fit(FitArgs a, Manifest& man) {
  const auto kind = parse_threshold_kind(a.threshold);
  const std::uint64_t seed = a.seed ? *a.seed : default_seed();
  a.fit.standardize = !a.no_standardize;
  const auto ds = load_dataset(a.latents, a.scores, kind, a.layers);
  const auto [train, val] = split(ds, {a.train_fraction, seed});
  auto r = fit_and_evaluate(train, val, a.fit);
  Hyperplane& h = r.hyperplane;
  h.meta["threshold_strategy"] = to_string(kind);
  h.meta["train_fraction"] = detail::format_double(a.train_fraction);
  h.meta["split_seed"] = std::to_string(seed);
  h.meta["n_train"] = std::to_string(train.size());
  h.meta["n_val"] = std::to_string(val.size());
  ensure_parent(a.out);
  save_hyperplane(to_record(h), a.out);

  std::printf("separating hyperplane accuracy\n");
  std::printf("%-10s %-6s %8s %8s %10s %10s\n", "threshold", "space", "n_train", "n_val",
              "train_acc", "val_acc");
  std::printf("%-10s %-6s %8zu %8zu %10.4f %10.4f\n", to_string(kind), h.space_tag.c_str(),
              train.size(), val.size(), h.train_accuracy, h.val_accuracy);

  man.inputs = {{"latents", a.latents}, {"scores", a.scores}};
  man.outputs = {{"hyperplane", a.out}};
  man.config = {{"threshold", to_string(kind)},
                {"train_fraction", a.train_fraction},
                {"seed", seed},
                {"l2_lambda", a.fit.l2_lambda},
                {"max_iters", a.fit.max_iters},
                {"tol", a.fit.tol},
                {"learning_rate", a.fit.learning_rate},
                {"standardize", a.fit.standardize},
                {"threads", a.fit.threads},
                {"iterations", r.iterations},
                {"train_accuracy", h.train_accuracy},
                {"val_accuracy", h.val_accuracy}};
  return a.out + ".manifest.json";
}

struct CompareArgs {
  std::string z_latents;
  std::string w_latents;
  std::string scores;
  std::string threshold = "mean";
  double train_fraction = 0.8;
  std::optional<std::uint64_t> seed;
  FitConfig fit;
  std::string out;
};

std::string run_compare(const CompareArgs& a, Manifest& man) {
  const auto kind = parse_threshold_kind(a.threshold);
  const std::uint64_t seed = a.seed ? *a.seed : default_seed();
  const auto z = load_dataset(a.z_latents, a.scores, kind, "");
  const auto w = load_dataset(a.w_latents, a.scores, kind, "");
  const auto c = compare_spaces(z, w, a.fit, {a.train_fraction, seed});
  const json report = {{"z_val_accuracy", c.z_val_accuracy},
                       {"w_val_accuracy", c.w_val_accuracy},
                       {"difference", c.difference},
                       {"threshold", to_string(kind)},
                       {"train_fraction", a.train_fraction},
                       {"seed", seed}};
  write_text(a.out, report.dump(2) + "\n");
  std::printf("%-6s %10s\n", "space", "val_acc");
  std::printf("%-6s %10.4f\n%-6s %10.4f\n", "z", c.z_val_accuracy, "w+", c.w_val_accuracy);
  man.inputs = {{"z_latents", a.z_latents}, {"w_latents", a.w_latents}, {"scores", a.scores}};
  man.outputs = {{"report", a.out}};
  man.config = {{"threshold", to_string(kind)}, {"train_fraction", a.train_fraction},
                 {"seed", seed}, {"l2_lambda", a.fit.l2_lambda},
                 {"max_iters", a.fit.max_iters}};
  return a.out + ".manifest.json";
}

struct EditArgs {
  std::string hyperplane;
  std::string latents;
  double alpha = 0.0;
  std::string layers;
  std::string layer_structure;
  std::string condition;
  std::string out;
};

Hyperplane load_direction(const std::string& path, const std::string& condition) {
  Hyperplane h = from_record(load_hyperplane(path));
  if (!condition.empty()) h = condition_direction(h, load_directions(split_list(condition)));
  return h;
}

/// Applies x -> x + alpha n (optionally masked) to every sample row; output
/// keeps the input's shape and dtype.
Matrix edit_rows(const Matrix& input, const Hyperplane& h, double alpha,
                 const std::optional<std::set<std::size_t>>& mask,
                 std::optional<LayerStructure> ls) {
  Matrix rows = as_rows(input);
  if (input.ndim() == 1) rows = input.reshaped({1, input.size()});
  if (!ls) ls = layers_of(input);
  if (!ls) ls = h.layer_structure;
  EditSpec spec;
  spec.alpha = alpha;
  spec.layer_mask = mask;
  spec.layer_structure = ls;
  Matrix out = rows;
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const auto y = apply_edit(rows.row(i), h, spec);
    std::copy(y.begin(), y.end(), out.row(i).begin());
  }
  return out.reshaped(input.shape());
}

std::string run_edit(const EditArgs& a, Manifest& man) {
  const Hyperplane h = load_direction(a.hyperplane, a.condition);
  const Matrix input = load_matrix(a.latents);
  std::optional<std::set<std::size_t>> mask;
  if (!a.layers.empty()) mask = parse_layers(a.layers);
  std::optional<LayerStructure> ls;
  if (!a.layer_structure.empty()) ls = parse_layer_structure(a.layer_structure);
  const Matrix out = edit_rows(input, h, a.alpha, mask, ls);
  ensure_parent(a.out);
  save_matrix(out, a.out);
  man.inputs = {{"hyperplane", a.hyperplane}, {"latents", a.latents},
                {"condition", split_list(a.condition)}};
  man.outputs = {{"latents", a.out}};
  man.config = {{"alpha", a.alpha}, {"layers", a.layers}, {"layer_structure", a.layer_structure}};
  return a.out + ".manifest.json";
}

struct ConditionArgs {
  std::string hyperplane;
  std::string condition;
  std::string out;
};

std::string run_condition(const ConditionArgs& a, Manifest& man) {
  require(!a.condition.empty(), "--condition needs at least one file");
  const Hyperplane h = load_direction(a.hyperplane, a.condition);
  ensure_parent(a.out);
  save_hyperplane(to_record(h), a.out);
  std::printf("conditioned on %s attribute direction(s)\n", h.meta.at("conditioned_on").c_str());
  man.inputs = {{"hyperplane", a.hyperplane}, {"condition", split_list(a.condition)}};
  man.outputs = {{"hyperplane", a.out}};
  return a.out + ".manifest.json";
}

struct LayerwiseArgs {
  std::string hyperplane;
  std::string latents;
  double alpha = 1.0;
  std::string layers;
  std::string out;
};

/// Input is one L x D latent (2-D) or a batch n x L x D (3-D).
std::string run_layerwise(const LayerwiseArgs& a, Manifest& man) {
  const Hyperplane h = from_record(load_hyperplane(a.hyperplane));
  const Matrix input = load_matrix(a.latents);
  const auto mask = parse_layers(a.layers);
  Matrix out = input;
  if (input.ndim() == 2) {
    out = layerwise_edit(input, h, a.alpha, mask);
    out.set_dtype(input.dtype());
  } else {
    require(input.ndim() == 3, "layerwise: latents must be L x D or n x L x D");
    const std::size_t L = input.shape()[1], D = input.shape()[2];
    for (std::size_t i = 0; i < input.rows(); ++i) {
      Matrix w({L, D}, std::vector<double>(input.row(i).begin(), input.row(i).end()));
      const auto e = layerwise_edit(w, h, a.alpha, mask);
      std::copy(e.data().begin(), e.data().end(), out.row(i).begin());
    }
  }
  ensure_parent(a.out);
  save_matrix(out, a.out);
  man.inputs = {{"hyperplane", a.hyperplane}, {"latents", a.latents}};
  man.outputs = {{"latents", a.out}};
  man.config = {{"alpha", a.alpha}, {"layers", a.layers}};
  return a.out + ".manifest.json";
}

struct SweepArgs {
  std::string hyperplane;
  std::string latents;
  std::string alphas;
  std::string layers;
  std::string condition;
  std::string world;
  bool noiseless = false;
  std::string scorer;
  std::string out_dir = ".";
};

std::vector<double> score_with_subprocess(const std::string& scorer, const Matrix& latents,
                                          const fs::path& dir, std::size_t k) {
  const auto in = (dir / ("scorer_in_" + std::to_string(k) + ".ltm")).string();
  const auto out = (dir / ("scorer_out_" + std::to_string(k) + ".csv")).string();
  save_matrix(latents, in);
  std::error_code ec;
  fs::remove(out, ec);
  const std::string cmd = scorer + " '" + in + "' '" + out + "'";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) fail(ErrorKind::scorer, "scorer exited with status " + std::to_string(rc));
  std::vector<double> scores;
  try {
    scores = load_scores(out);
  } catch (const Error& e) {
    fail(ErrorKind::scorer, std::string("scorer output unusable: ") + e.what());
  }
  fs::remove(in, ec);
  fs::remove(out, ec);
  if (scores.size() != latents.rows())
    fail(ErrorKind::scorer, "scorer returned " + std::to_string(scores.size()) +
                                " scores for " + std::to_string(latents.rows()) + " latents");
  return scores;
}

std::string run_sweep(const SweepArgs& a, Manifest& man) {
  require(a.world.empty() != a.scorer.empty(), "sweep needs exactly one of --world or --scorer");
  const auto alphas = parse_doubles(a.alphas, "--alphas");
  const Hyperplane h = load_direction(a.hyperplane, a.condition);
  const Matrix input = load_matrix(a.latents);
  std::optional<std::set<std::size_t>> mask;
  if (!a.layers.empty()) mask = parse_layers(a.layers);
  std::optional<SyntheticWorld> world;
  if (!a.world.empty()) world = load_world(a.world);

  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  const Matrix rows = input.ndim() == 1 ? input.reshaped({1, input.size()}) : as_rows(input);
  const std::size_t n = rows.rows(), d = rows.cols();
  Matrix all({alphas.size(), n, d}, input.dtype());
  std::vector<std::pair<double, std::vector<double>>> per_alpha;
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    Matrix edited = edit_rows(rows, h, alphas[k], mask, layers_of(input));
    edited.set_dtype(input.dtype());
    // Score what would be written to disk, including f32 rounding.
    if (input.dtype() == DType::f32)
      for (double& v : edited.data()) v = static_cast<double>(static_cast<float>(v));
    std::copy(edited.data().begin(), edited.data().end(),
              all.data().begin() + static_cast<std::ptrdiff_t>(k * n * d));
    auto s = world ? score(*world, edited, a.noiseless)
                   : score_with_subprocess(a.scorer, edited, dir, k);
    per_alpha.emplace_back(alphas[k], std::move(s));
  }
  const auto rep = sweep_report(per_alpha);

  const auto latents_path = (dir / "sweep_latents.ltm").string();
  const auto csv_path = (dir / "sweep.csv").string();
  const auto json_path = (dir / "sweep.json").string();
  save_matrix(all, latents_path);
  std::string csv = "alpha,mean,std\n";
  json entries = json::array();
  for (const auto& e : rep.entries) {
    csv += detail::format_double(e.alpha) + "," + detail::format_double(e.mean) + "," +
           detail::format_double(e.std) + "\n";
    entries.push_back({{"alpha", e.alpha}, {"mean", e.mean}, {"std", e.std}, {"counts", e.counts}});
    std::printf("alpha %8.3f  mean %.6f  std %.6f\n", e.alpha, e.mean, e.std);
  }
  write_text(csv_path, csv);
  write_text(json_path, json({{"bin_edges", rep.bin_edges}, {"entries", entries}}).dump(2) + "\n");

  man.inputs = {{"hyperplane", a.hyperplane}, {"latents", a.latents},
                {"condition", split_list(a.condition)}, {"world", a.world}};
  man.outputs = {{"latents", latents_path}, {"csv", csv_path}, {"report", json_path}};
  man.config = {{"alphas", alphas}, {"layers", a.layers}, {"noiseless", a.noiseless},
                {"scorer", a.scorer}};
  return (dir / "manifest.json").string();
}

struct RankArgs {
  std::string a;
  std::string b;
  std::string out_prefix;
};

std::string run_rank(const RankArgs& a, Manifest& man) {
  const auto x = load_scores(a.a), y = load_scores(a.b);
  const double tau = kendall_tau(x, y), rho = spearman_rho(x, y);
  write_text(a.out_prefix + ".json",
             json({{"n", x.size()}, {"kendall_tau_b", tau}, {"spearman_rho", rho}}).dump(2) + "\n");
  write_text(a.out_prefix + ".csv", "kendall_tau_b,spearman_rho\n" + detail::format_double(tau) +
                                        "," + detail::format_double(rho) + "\n");
  std::printf("kendall_tau_b %.6f  spearman_rho %.6f\n", tau, rho);
  man.inputs = {{"a", a.a}, {"b", a.b}};
  man.outputs = {{"json", a.out_prefix + ".json"}, {"csv", a.out_prefix + ".csv"}};
  return a.out_prefix + ".manifest.json";
}

struct RealnessArgs {
  std::string modified;
  std::string baseline;
  std::string reference;
  std::string alpha;  // label carried into the CSV row
  KidConfig kid;
  std::optional<std::uint64_t> seed;
  std::string out_prefix;
};

std::string run_realness(RealnessArgs a, Manifest& man) {
  a.kid.seed = a.seed ? *a.seed : default_seed();
  const Matrix mod = as_rows(load_matrix(a.modified));
  const Matrix base = as_rows(load_matrix(a.baseline));
  const Matrix ref = as_rows(load_matrix(a.reference));
  KidConfig cfg = a.kid;
  cfg.subset_size = std::min({cfg.subset_size, mod.rows(), base.rows(), ref.rows()});
  const auto r = realness_ratio(mod, base, ref, cfg);
  write_text(a.out_prefix + ".json", json({{"fid_modified", r.fid_modified},
                                           {"fid_baseline", r.fid_baseline},
                                           {"kid_modified", r.kid_modified},
                                           {"kid_baseline", r.kid_baseline},
                                           {"fid_ratio", r.fid_ratio},
                                           {"kid_ratio", r.kid_ratio},
                                           {"subset_size", cfg.subset_size},
                                           {"num_subsets", cfg.num_subsets},
                                           {"seed", cfg.seed}})
                                         .dump(2) +
                                         "\n");
  write_text(a.out_prefix + ".csv", "alpha,fid_ratio,kid_ratio\n" + a.alpha + "," +
                                        detail::format_double(r.fid_ratio) + "," +
                                        detail::format_double(r.kid_ratio) + "\n");
  std::printf("fid_ratio %.6f  kid_ratio %.6f\n", r.fid_ratio, r.kid_ratio);
  man.inputs = {{"modified", a.modified}, {"baseline", a.baseline}, {"reference", a.reference}};
  man.outputs = {{"json", a.out_prefix + ".json"}, {"csv", a.out_prefix + ".csv"}};
  man.config = {{"subset_size", cfg.subset_size}, {"num_subsets", cfg.num_subsets},
                {"seed", cfg.seed}};
  return a.out_prefix + ".manifest.json";
}

int run(std::vector<std::string> args, bool allow_replay);

int run_replay(const std::string& manifest_path) {
  json j;
  try {
    j = json::parse(detail::read_file(manifest_path));
  } catch (const json::exception& e) {
    fail(ErrorKind::format, "'" + manifest_path + "': " + e.what());
  }
  std::vector<std::string> argv;
  std::string cwd;
  try {
    argv = j.at("argv").get<std::vector<std::string>>();
    cwd = j.at("cwd").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::format, "manifest: " + std::string(e.what()));
  }
  // The resolved seed is replayed explicitly so the environment cannot change it.
  if (j.contains("config") && j["config"].contains("seed") && !j["config"]["seed"].is_null()) {
    bool has_seed = false;
    for (const auto& s : argv) has_seed |= s == "--seed" || s.rfind("--seed=", 0) == 0;
    if (!has_seed) argv.push_back("--seed=" + std::to_string(j["config"]["seed"].get<std::uint64_t>()));
  }
  std::error_code ec;
  const auto here = fs::current_path();
  fs::current_path(cwd, ec);
  if (ec) fail(ErrorKind::io, "cannot enter recorded directory '" + cwd + "'");
  const int rc = run(argv, false);
  fs::current_path(here, ec);
  return rc;
}

int run(std::vector<std::string> args, bool allow_replay) {
  CLI::App app{"Hyperplane-based latent attribute editing and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  FitConfig defaults;
  auto add_fit_options = [&](CLI::App* sub, FitConfig& cfg) {
    sub->add_option("--l2", cfg.l2_lambda, "L2 penalty")->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->add_option("--max-iters", cfg.max_iters, "Iteration cap")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--tol", cfg.tol, "Gradient-norm tolerance")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--lr", cfg.learning_rate, "Initial step")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--threads", cfg.threads, "Gradient threads")->capture_default_str()->check(CLI::Range(1u, 256u));
  };

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Sample a synthetic world: latents, scores, world file");
  c_synth->add_option("--dim", synth.dim, "Latent dimension")->capture_default_str()->check(CLI::Range(std::size_t{2}, std::size_t{1} << 24));
  c_synth->add_option("--n", synth.n, "Sample count")->capture_default_str()->check(CLI::PositiveNumber);
  c_synth->add_option("--seed", synth.seed, "Seed (default: $MEMEDIT_SEED or 0)");
  c_synth->add_option("--sigma", synth.sigma, "Score noise std")->capture_default_str()->check(CLI::NonNegativeNumber);
  c_synth->add_option("--psi", synth.psi, "Per-component truncation threshold")->check(CLI::PositiveNumber);
  c_synth->add_option("--layers", synth.layers, "Extended layout LxD, e.g. 18x512");
  c_synth->add_option("--sparse-layer", synth.sparse_layer, "Put the true direction in this layer only")->needs("--layers");
  c_synth->add_option("--stream", synth.stream, "Independent draw index")->capture_default_str();
  c_synth->add_option("--dtype", synth.dtype, "Latent file dtype")->capture_default_str()->check(CLI::IsMember({"f32", "f64"}));
  c_synth->add_flag("--plain-projection", synth.plain_projection, "Also write layer-averaged plain latents");
  c_synth->add_option("--out-dir", synth.out_dir, "Output directory")->capture_default_str();

  FitArgs fit_args;
  auto* c_fit = app.add_subcommand("fit", "Fit the separating hyperplane");
  c_fit->add_option("--latents", fit_args.latents, "LTM1 latents")->required();
  c_fit->add_option("--scores", fit_args.scores, "Scores CSV")->required();
  c_fit->add_option("--threshold", fit_args.threshold, "mean or median")->capture_default_str()->check(CLI::IsMember({"mean", "median"}));
  c_fit->add_option("--train-fraction", fit_args.train_fraction)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  c_fit->add_option("--seed", fit_args.seed, "Split seed (default: $MEMEDIT_SEED or 0)");
  c_fit->add_flag("--no-standardize", fit_args.no_standardize);
  c_fit->add_option("--layers", fit_args.layers, "Layout LxD for flattened extended latents");
  c_fit->add_option("--out", fit_args.out, "Hyperplane JSON")->required();
  add_fit_options(c_fit, fit_args.fit);

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare", "Fit plain and extended latents on the same split");
  c_cmp->add_option("--z-latents", cmp.z_latents)->required();
  c_cmp->add_option("--w-latents", cmp.w_latents)->required();
  c_cmp->add_option("--scores", cmp.scores)->required();
  c_cmp->add_option("--threshold", cmp.threshold)->capture_default_str()->check(CLI::IsMember({"mean", "median"}));
  c_cmp->add_option("--train-fraction", cmp.train_fraction)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  c_cmp->add_option("--seed", cmp.seed);
  c_cmp->add_option("--out", cmp.out, "Report JSON")->required();
  add_fit_options(c_cmp, cmp.fit);

  EditArgs ed;
  auto* c_edit = app.add_subcommand("edit", "Move latents along the hyperplane normal");
  c_edit->add_option("--hyperplane", ed.hyperplane)->required();
  c_edit->add_option("--latents", ed.latents)->required();
  c_edit->add_option("--alpha", ed.alpha)->required();
  c_edit->add_option("--layers", ed.layers, "Comma-separated layer mask");
  c_edit->add_option("--layer-structure", ed.layer_structure, "LxD when not implied by inputs");
  c_edit->add_option("--condition", ed.condition, "Comma-separated attribute files");
  c_edit->add_option("--out", ed.out)->required();

  ConditionArgs cond;
  auto* c_cond = app.add_subcommand("condition", "Project attribute directions out of the normal");
  c_cond->add_option("--hyperplane", cond.hyperplane)->required();
  c_cond->add_option("--condition", cond.condition, "Comma-separated attribute files")->required();
  c_cond->add_option("--out", cond.out)->required();

  LayerwiseArgs lw;
  auto* c_lw = app.add_subcommand("layerwise", "Edit selected layers of extended latents");
  c_lw->add_option("--hyperplane", lw.hyperplane)->required();
  c_lw->add_option("--latents", lw.latents)->required();
  c_lw->add_option("--alpha", lw.alpha)->capture_default_str();
  c_lw->add_option("--layers", lw.layers, "Comma-separated layer indices")->required();
  c_lw->add_option("--out", lw.out)->required();

  SweepArgs sw;
  auto* c_sw = app.add_subcommand("sweep", "Edit over a list of alphas and summarize scores");
  c_sw->add_option("--hyperplane", sw.hyperplane)->required();
  c_sw->add_option("--latents", sw.latents)->required();
  c_sw->add_option("--alphas", sw.alphas, "Comma-separated alphas")->required()->allow_extra_args(false);
  c_sw->add_option("--layers", sw.layers);
  c_sw->add_option("--condition", sw.condition);
  c_sw->add_option("--world", sw.world, "Score with a synthetic world file");
  c_sw->add_flag("--noiseless", sw.noiseless, "Omit world score noise");
  c_sw->add_option("--scorer", sw.scorer, "External scorer command: CMD LATENTS SCORES");
  c_sw->add_option("--out-dir", sw.out_dir)->capture_default_str();

  auto* c_metrics = app.add_subcommand("metrics", "Rank correlations or realness ratios");
  c_metrics->require_subcommand(1);
  RankArgs rk;
  auto* c_rank = c_metrics->add_subcommand("rank", "Kendall tau-b and Spearman rho of two score files");
  c_rank->add_option("--a", rk.a)->required();
  c_rank->add_option("--b", rk.b)->required();
  c_rank->add_option("--out-prefix", rk.out_prefix)->required();
  RealnessArgs rl;
  auto* c_real = c_metrics->add_subcommand("realness", "FID and KID ratios against a baseline");
  c_real->add_option("--modified", rl.modified)->required();
  c_real->add_option("--baseline", rl.baseline)->required();
  c_real->add_option("--reference", rl.reference)->required();
  c_real->add_option("--alpha", rl.alpha, "Label for the CSV row")->capture_default_str();
  c_real->add_option("--subset-size", rl.kid.subset_size)->capture_default_str()->check(CLI::Range(std::size_t{2}, std::size_t{1} << 30));
  c_real->add_option("--subsets", rl.kid.num_subsets)->capture_default_str()->check(CLI::PositiveNumber);
  c_real->add_option("--seed", rl.seed);
  c_real->add_option("--out-prefix", rl.out_prefix)->required();

  std::string replay_path;
  auto* c_replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  c_replay->add_option("manifest", replay_path)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  Manifest man;
  man.argv = args;
  std::string manifest_path;
  if (c_synth->parsed()) {
    man.command = "synth";
    manifest_path = run_synth(synth, man);
  } else if (c_fit->parsed()) {
    man.command = "fit";
    manifest_path = run_fit(fit_args, man);
  } else if (c_cmp->parsed()) {
    man.command = "compare";
    manifest_path = run_compare(cmp, man);
  } else if (c_edit->parsed()) {
    man.command = "edit";
    manifest_path = run_edit(ed, man);
  } else if (c_cond->parsed()) {
    man.command = "condition";
    manifest_path = run_condition(cond, man);
  } else if (c_lw->parsed()) {
    man.command = "layerwise";
    manifest_path = run_layerwise(lw, man);
  } else if (c_sw->parsed()) {
    man.command = "sweep";
    manifest_path = run_sweep(sw, man);
  } else if (c_rank->parsed()) {
    man.command = "metrics rank";
    manifest_path = run_rank(rk, man);
  } else if (c_real->parsed()) {
    man.command = "metrics realness";
    manifest_path = run_realness(rl, man);
  } else if (c_replay->parsed()) {
    if (!allow_replay) fail(ErrorKind::validation, "a manifest cannot replay another replay");
    return run_replay(replay_path);
  }
  man.write(manifest_path);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(std::move(args), true);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}
