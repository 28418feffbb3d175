#include "closer/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "closer/encoder.hpp"
#include "closer/error.hpp"
#include "closer/rng.hpp"
#include "json.hpp"

namespace closer {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config (de)serialization

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorCode::kInvalidArgument, "config: " + path_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::kInvalidArgument, "config: " + path_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) fail(ErrorCode::kInvalidArgument, "config: unknown key " + path_ + "." + k);
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json mine_to_json(const MineConfig& m) {
  return {{"hidden", m.hidden},         {"layers", m.layers},
          {"lr", m.lr},                 {"iterations", m.iterations},
          {"batch_size", m.batch_size}, {"seed", m.seed},
          {"readout_fraction", m.readout_fraction}};
}

void mine_from_json(const json& j, MineConfig& m, const std::string& path) {
  ObjectReader r(j, path);
  r.get("hidden", m.hidden);
  r.get("layers", m.layers);
  r.get("lr", m.lr);
  r.get("iterations", m.iterations);
  r.get("batch_size", m.batch_size);
  r.get("seed", m.seed);
  r.get("readout_fraction", m.readout_fraction);
  r.finish();
}

json config_json(const ExperimentConfig& c) {
  json j;
  j["preset"] = c.preset;
  const auto& d = c.dataset;
  j["dataset"] = {{"kind", d.kind},
                  {"classes", d.classes},
                  {"train_per_class", d.train_per_class},
                  {"test_per_class", d.test_per_class},
                  {"input_dim", d.input_dim},
                  {"center_separation", d.center_separation},
                  {"cluster_std", d.cluster_std},
                  {"modes_per_class", d.modes_per_class},
                  {"mode_spread", d.mode_spread},
                  {"image_side", d.image_side},
                  {"train_images", d.train_images},
                  {"train_labels", d.train_labels},
                  {"test_images", d.test_images},
                  {"test_labels", d.test_labels},
                  {"max_train_per_class", d.max_train_per_class},
                  {"max_test_per_class", d.max_test_per_class}};
  j["split"] = {{"base_classes", c.split.base_classes},
                {"ways", c.split.ways},
                {"shots", c.split.shots},
                {"sessions", c.split.sessions}};
  j["encoder"] = {{"hidden", c.encoder.hidden}, {"embedding_dim", c.encoder.embedding_dim}};
  j["loss"] = {{"tau", c.loss.tau},
               {"margin", c.loss.margin},
               {"lambda_ssc", c.loss.lambda_ssc},
               {"lambda_inter", c.loss.lambda_inter},
               {"lambda_intra", c.loss.lambda_intra}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"momentum", c.train.momentum},
                {"weight_decay", c.train.weight_decay}};
  json crop = nullptr;
  if (c.augmentation.crop) crop = {{"pad", c.augmentation.crop->pad}, {"size", c.augmentation.crop->size}};
  j["augmentation"] = {{"crop", crop},
                       {"hflip_probability", c.augmentation.hflip_probability},
                       {"noise_std", c.augmentation.noise_std},
                       {"stream", c.augmentation.stream}};
  const auto& m = c.metrics;
  j["metrics"] = {{"transferability", m.transferability},
                  {"transferability_per_session", m.transferability_per_session},
                  {"spread", m.spread},
                  {"histogram", m.histogram},
                  {"histogram_bins", m.histogram_bins},
                  {"features", m.features},
                  {"ib", m.ib}};
  j["ib"] = {{"xz", mine_to_json(c.ib.xz)}, {"yz", mine_to_json(c.ib.yz)}};
  j["seeds"] = c.seeds;
  j["master_seed"] = c.master_seed;
  j["output_dir"] = c.output_dir;
  return j;
}

ExperimentConfig config_from(const json& j) {
  ExperimentConfig c;
  ObjectReader top(j, "config");
  if (j.contains("preset")) {
    std::string name;
    top.get("preset", name);
    if (name != "custom") c = preset(name);
    c.preset = name;
  }
  if (const json* d = top.child("dataset")) {
    ObjectReader r(*d, "dataset");
    auto& x = c.dataset;
    r.get("kind", x.kind);
    r.get("classes", x.classes);
    r.get("train_per_class", x.train_per_class);
    r.get("test_per_class", x.test_per_class);
    r.get("input_dim", x.input_dim);
    r.get("center_separation", x.center_separation);
    r.get("cluster_std", x.cluster_std);
    r.get("modes_per_class", x.modes_per_class);
    r.get("mode_spread", x.mode_spread);
    r.get("image_side", x.image_side);
    r.get("train_images", x.train_images);
    r.get("train_labels", x.train_labels);
    r.get("test_images", x.test_images);
    r.get("test_labels", x.test_labels);
    r.get("max_train_per_class", x.max_train_per_class);
    r.get("max_test_per_class", x.max_test_per_class);
    r.finish();
  }
  if (const json* s = top.child("split")) {
    ObjectReader r(*s, "split");
    r.get("base_classes", c.split.base_classes);
    r.get("ways", c.split.ways);
    r.get("shots", c.split.shots);
    r.get("sessions", c.split.sessions);
    r.finish();
  }
  if (const json* e = top.child("encoder")) {
    ObjectReader r(*e, "encoder");
    r.get("hidden", c.encoder.hidden);
    r.get("embedding_dim", c.encoder.embedding_dim);
    r.finish();
  }
  if (const json* l = top.child("loss")) {
    ObjectReader r(*l, "loss");
    r.get("tau", c.loss.tau);
    r.get("margin", c.loss.margin);
    r.get("lambda_ssc", c.loss.lambda_ssc);
    r.get("lambda_inter", c.loss.lambda_inter);
    r.get("lambda_intra", c.loss.lambda_intra);
    r.finish();
  }
  if (const json* t = top.child("train")) {
    ObjectReader r(*t, "train");
    r.get("epochs", c.train.epochs);
    r.get("batch_size", c.train.batch_size);
    r.get("lr", c.train.lr);
    r.get("momentum", c.train.momentum);
    r.get("weight_decay", c.train.weight_decay);
    r.finish();
  }
  if (const json* a = top.child("augmentation")) {
    ObjectReader r(*a, "augmentation");
    if (const json* crop = r.child("crop")) {
      if (crop->is_null()) {
        c.augmentation.crop.reset();
      } else {
        ObjectReader cr(*crop, "augmentation.crop");
        CropSpec spec;
        cr.get("pad", spec.pad);
        cr.get("size", spec.size);
        cr.finish();
        c.augmentation.crop = spec;
      }
    }
    r.get("hflip_probability", c.augmentation.hflip_probability);
    r.get("noise_std", c.augmentation.noise_std);
    r.get("stream", c.augmentation.stream);
    r.finish();
  }
  if (const json* m = top.child("metrics")) {
    ObjectReader r(*m, "metrics");
    auto& x = c.metrics;
    r.get("transferability", x.transferability);
    r.get("transferability_per_session", x.transferability_per_session);
    r.get("spread", x.spread);
    r.get("histogram", x.histogram);
    r.get("histogram_bins", x.histogram_bins);
    r.get("features", x.features);
    r.get("ib", x.ib);
    r.finish();
  }
  if (const json* ib = top.child("ib")) {
    ObjectReader r(*ib, "ib");
    if (const json* xz = r.child("xz")) mine_from_json(*xz, c.ib.xz, "ib.xz");
    if (const json* yz = r.child("yz")) mine_from_json(*yz, c.ib.yz, "ib.yz");
    r.finish();
  }
  top.get("seeds", c.seeds);
  top.get("master_seed", c.master_seed);
  top.get("output_dir", c.output_dir);
  top.finish();
  return c;
}

// ---------------------------------------------------------------------------
// Report (de)serialization

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json report_to_json(const SessionReport& r) {
  json j;
  j["seed"] = r.seed;
  j["base_classes"] = r.base_classes;
  j["new_classes"] = r.new_classes;
  j["sessions"] = json::array();
  for (const auto& s : r.sessions) {
    json pc = json::object();
    for (const auto& [c, a] : s.per_class_accuracy) pc[std::to_string(c)] = a;
    j["sessions"].push_back({{"session", s.session},
                             {"per_class_accuracy", pc},
                             {"A_B", optional_json(s.base_accuracy)},
                             {"A_N", optional_json(s.new_accuracy)},
                             {"A_W", s.whole_accuracy},
                             {"base_samples", s.base_samples},
                             {"base_correct", s.base_correct},
                             {"new_samples", s.new_samples},
                             {"new_correct", s.new_correct}});
  }
  j["performance_drop"] = optional_json(r.performance_drop);
  j["base_accuracy_before_cr"] = r.base_accuracy_before_cr;
  j["base_accuracy_after_cr"] = r.base_accuracy_after_cr;
  j["transferability"] = optional_json(r.transferability);
  j["transferability_per_session"] = r.transferability_per_session;
  j["spread"] = {{"intra_spread", optional_json(r.spread.intra_spread)},
                 {"inter_distance", optional_json(r.spread.inter_distance)}};
  if (r.histogram) {
    json counts = json::object();
    for (const auto& [c, v] : r.histogram->counts) counts[std::to_string(c)] = v;
    j["histogram"] = {{"bins", r.histogram->bins}, {"counts", counts}};
  } else {
    j["histogram"] = nullptr;
  }
  j["ib"] = json::array();
  for (const auto& p : r.ib) {
    j["ib"].push_back({{"group", p.group},
                       {"I_XZ", p.i_xz},
                       {"I_YZ", p.i_yz},
                       {"closed_form_bound", optional_json(p.closed_form_bound)}});
  }
  j["train_log"] = json::array();
  for (const auto& e : r.train_log) {
    j["train_log"].push_back({{"epoch", e.epoch},
                              {"lr", e.lr},
                              {"total", e.mean_total},
                              {"ce", e.mean_ce},
                              {"ssc", e.mean_ssc},
                              {"inter", e.mean_inter},
                              {"intra", e.mean_intra}});
  }
  if (r.features) {
    j["features"] = {{"rows", r.features->rows()},
                     {"cols", r.features->cols()},
                     {"data", r.features->values()},
                     {"labels", r.feature_labels}};
  } else {
    j["features"] = nullptr;
  }
  return j;
}

SessionReport report_from_json(const json& j) {
  SessionReport r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.base_classes = j.at("base_classes").get<std::vector<int>>();
  r.new_classes = j.at("new_classes").get<std::vector<int>>();
  for (const auto& s : j.at("sessions")) {
    SessionEval e;
    e.session = s.at("session").get<std::size_t>();
    for (const auto& [k, v] : s.at("per_class_accuracy").items())
      e.per_class_accuracy[std::stoi(k)] = v.get<double>();
    e.base_accuracy = optional_from(s.at("A_B"));
    e.new_accuracy = optional_from(s.at("A_N"));
    e.whole_accuracy = s.at("A_W").get<double>();
    e.base_samples = s.at("base_samples").get<std::size_t>();
    e.base_correct = s.at("base_correct").get<std::size_t>();
    e.new_samples = s.at("new_samples").get<std::size_t>();
    e.new_correct = s.at("new_correct").get<std::size_t>();
    r.sessions.push_back(std::move(e));
  }
  r.performance_drop = optional_from(j.at("performance_drop"));
  r.base_accuracy_before_cr = j.at("base_accuracy_before_cr").get<double>();
  r.base_accuracy_after_cr = j.at("base_accuracy_after_cr").get<double>();
  r.transferability = optional_from(j.at("transferability"));
  r.transferability_per_session = j.at("transferability_per_session").get<std::vector<double>>();
  r.spread.intra_spread = optional_from(j.at("spread").at("intra_spread"));
  r.spread.inter_distance = optional_from(j.at("spread").at("inter_distance"));
  if (!j.at("histogram").is_null()) {
    AngularHistogram h;
    h.bins = j.at("histogram").at("bins").get<std::size_t>();
    for (const auto& [k, v] : j.at("histogram").at("counts").items())
      h.counts[std::stoi(k)] = v.get<std::vector<std::size_t>>();
    r.histogram = std::move(h);
  }
  for (const auto& p : j.at("ib")) {
    r.ib.push_back({p.at("group").get<std::string>(), p.at("I_XZ").get<double>(),
                    p.at("I_YZ").get<double>(), optional_from(p.at("closed_form_bound"))});
  }
  for (const auto& e : j.at("train_log")) {
    r.train_log.push_back({e.at("epoch").get<std::size_t>(), e.at("lr").get<double>(),
                           e.at("total").get<double>(), e.at("ce").get<double>(),
                           e.at("ssc").get<double>(), e.at("inter").get<double>(),
                           e.at("intra").get<double>()});
  }
  if (!j.at("features").is_null()) {
    const auto& f = j.at("features");
    r.features = Tensor::matrix(f.at("rows").get<std::size_t>(), f.at("cols").get<std::size_t>(),
                                f.at("data").get<std::vector<double>>());
    r.feature_labels = f.at("labels").get<std::vector<int>>();
  }
  return r;
}

json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }
json mean_std_json(const std::optional<MeanStd>& m) { return m ? mean_std_json(*m) : json(nullptr); }

json aggregate_to_json(const AggregateReport& a) {
  json sessions = json::array();
  for (std::size_t t = 0; t < a.whole_accuracy.size(); ++t) {
    sessions.push_back({{"session", t},
                        {"A_B", mean_std_json(a.base_accuracy[t])},
                        {"A_N", mean_std_json(a.new_accuracy[t])},
                        {"A_W", mean_std_json(a.whole_accuracy[t])}});
  }
  return {{"sessions", sessions},
          {"performance_drop", mean_std_json(a.performance_drop)},
          {"transferability", mean_std_json(a.transferability)},
          {"intra_spread", mean_std_json(a.intra_spread)},
          {"inter_distance", mean_std_json(a.inter_distance)},
          {"base_accuracy_before_cr", mean_std_json(a.base_accuracy_before_cr)},
          {"base_accuracy_after_cr", mean_std_json(a.base_accuracy_after_cr)},
          {"cr_drop", mean_std_json(a.cr_drop)}};
}

json run_to_json(const RunResult& r) {
  json j;
  j["config_hash"] = r.config_hash;
  j["master_seed"] = r.config.master_seed;
  j["config"] = config_json(r.config);
  j["reports"] = json::array();
  for (const auto& rep : r.reports) j["reports"].push_back(report_to_json(rep));
  j["aggregate"] = aggregate_to_json(r.aggregate);
  return j;
}

// ---------------------------------------------------------------------------
// Files

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::kIo, "cannot write " + path.string());
  os << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::kMissingArtifact, "missing run artifact " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string stamp(const RunResult& r) {
  return r.config_hash + "," + std::to_string(r.config.master_seed);
}

std::filesystem::path write_sessions_csv(const RunResult& r, const std::filesystem::path& dir) {
  std::ostringstream os;
  os << "config_hash,master_seed,session,A_B,A_N,A_W,A_B_std,A_N_std,A_W_std\n";
  const auto& a = r.aggregate;
  for (std::size_t t = 0; t < a.whole_accuracy.size(); ++t) {
    auto mean_of = [](const std::optional<MeanStd>& m) {
      return m ? std::optional<double>(m->mean) : std::nullopt;
    };
    auto std_of = [](const std::optional<MeanStd>& m) {
      return m ? std::optional<double>(m->std) : std::nullopt;
    };
    os << stamp(r) << ',' << t << ',' << num(mean_of(a.base_accuracy[t])) << ','
       << num(mean_of(a.new_accuracy[t])) << ',' << num(a.whole_accuracy[t].mean) << ','
       << num(std_of(a.base_accuracy[t])) << ',' << num(std_of(a.new_accuracy[t])) << ','
       << num(a.whole_accuracy[t].std) << '\n';
  }
  const auto path = dir / "sessions.csv";
  write_text(path, os.str());
  return path;
}

std::filesystem::path write_metrics_csv(const RunResult& r, const std::filesystem::path& dir) {
  std::ostringstream os;
  os << "config_hash,master_seed,seed,PD,T,intra_spread,inter_distance,A_B_before_CR,"
        "A_B_after_CR\n";
  for (const auto& rep : r.reports) {
    os << stamp(r) << ',' << rep.seed << ',' << num(rep.performance_drop) << ','
       << num(rep.transferability) << ',' << num(rep.spread.intra_spread) << ','
       << num(rep.spread.inter_distance) << ',' << num(rep.base_accuracy_before_cr) << ','
       << num(rep.base_accuracy_after_cr) << '\n';
  }
  const auto& a = r.aggregate;
  auto mean_of = [](const std::optional<MeanStd>& m) {
    return m ? std::optional<double>(m->mean) : std::nullopt;
  };
  os << stamp(r) << ",mean," << num(mean_of(a.performance_drop)) << ','
     << num(mean_of(a.transferability)) << ',' << num(mean_of(a.intra_spread)) << ','
     << num(mean_of(a.inter_distance)) << ',' << num(a.base_accuracy_before_cr.mean) << ','
     << num(a.base_accuracy_after_cr.mean) << '\n';
  const auto path = dir / "metrics.csv";
  write_text(path, os.str());
  return path;
}

std::filesystem::path write_histogram_csv(const RunResult& r, const std::filesystem::path& dir) {
  std::ostringstream os;
  os << "config_hash,master_seed,seed,class_id,bin_lo,bin_hi,count\n";
  for (const auto& rep : r.reports) {
    require(rep.histogram.has_value(), ErrorCode::kMissingArtifact,
            "histogram export needs a run with 2-dimensional embeddings and metrics.histogram "
            "enabled (embedding_dim is " + std::to_string(r.config.encoder.embedding_dim) + ")");
    const auto& h = *rep.histogram;
    for (const auto& [c, counts] : h.counts)
      for (std::size_t b = 0; b < h.bins; ++b)
        os << stamp(r) << ',' << rep.seed << ',' << c << ',' << num(h.bin_lo(b)) << ','
           << num(h.bin_hi(b)) << ',' << counts[b] << '\n';
  }
  const auto path = dir / "histogram.csv";
  write_text(path, os.str());
  return path;
}

std::filesystem::path write_features_csv(const RunResult& r, const std::filesystem::path& dir) {
  std::ostringstream os;
  const auto d = r.config.encoder.embedding_dim;
  os << "config_hash,master_seed,seed,sample_id,label";
  for (std::size_t k = 0; k < d; ++k) os << ",f" << k;
  os << '\n';
  for (const auto& rep : r.reports) {
    require(rep.features.has_value(), ErrorCode::kMissingArtifact,
            "feature export needs a run with metrics.features enabled");
    const auto& f = *rep.features;
    for (std::size_t i = 0; i < f.rows(); ++i) {
      os << stamp(r) << ',' << rep.seed << ',' << i << ',' << rep.feature_labels[i];
      for (double v : f.row(i)) os << ',' << num(v);
      os << '\n';
    }
  }
  const auto path = dir / "features.csv";
  write_text(path, os.str());
  return path;
}

std::filesystem::path write_ib_csv(const RunResult& r, const std::filesystem::path& dir) {
  std::ostringstream os;
  os << "config_hash,master_seed,seed,group,I_XZ,I_YZ,closed_form_bound\n";
  for (const auto& rep : r.reports) {
    require(!rep.ib.empty(), ErrorCode::kMissingArtifact,
            "ib export needs IB-plane points (enable metrics.ib or run ib-eval)");
    for (const auto& p : rep.ib)
      os << stamp(r) << ',' << rep.seed << ',' << p.group << ',' << num(p.i_xz) << ','
         << num(p.i_yz) << ',' << num(p.closed_form_bound) << '\n';
  }
  const auto path = dir / "ib.csv";
  write_text(path, os.str());
  return path;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t index) {
  return dir / ("encoder_seed" + std::to_string(index) + ".json");
}

RunResult load_run(const std::filesystem::path& run_dir) {
  const auto text = read_text(run_dir / "summary.json");
  RunResult r;
  try {
    const json j = json::parse(text);
    r.config = config_from(j.at("config"));
    r.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& rep : j.at("reports")) r.reports.push_back(report_from_json(rep));
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, "summary.json: " + std::string(e.what()));
  }
  r.aggregate = aggregate(r.reports);
  return r;
}

void write_summary(const RunResult& r, const std::filesystem::path& dir) {
  write_text(dir / "summary.json", run_to_json(r).dump(2) + "\n");
}

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return m;
  CompensatedSum s;
  for (double x : v) s.add(x);
  m.mean = s.value() / static_cast<double>(v.size());
  CompensatedSum q;
  for (double x : v) q.add((x - m.mean) * (x - m.mean));
  m.std = std::sqrt(q.value() / static_cast<double>(v.size()));
  return m;
}

std::optional<MeanStd> mean_std_present(const std::vector<std::optional<double>>& v) {
  std::vector<double> present;
  for (const auto& x : v)
    if (x) present.push_back(*x);
  if (present.empty()) return std::nullopt;
  return mean_std(present);
}

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    const std::string what = e.what();
    if (what.rfind("stage ", 0) == 0) throw;
    throw Error(e.code(), std::string("stage ") + name + ": " + what);
  }
}

Dataset cap_per_class(const Dataset& data, std::size_t cap) {
  if (cap == 0) return data;
  std::map<int, std::size_t> seen;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (seen[data.label(i)]++ < cap) keep.push_back(i);
  return data.subset(keep);
}

}  // namespace

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  loss.validate();
  train.validate();
  augmentation.validate();
  require(dataset.kind == "synthetic" || dataset.kind == "idx", ErrorCode::kInvalidArgument,
          "config: dataset.kind must be 'synthetic' or 'idx'");
  if (dataset.kind == "synthetic") {
    require(dataset.classes >= 2 && dataset.train_per_class >= 1 && dataset.test_per_class >= 1,
            ErrorCode::kInvalidArgument, "config: synthetic dataset needs classes and samples");
    require(dataset.input_dim >= 1, ErrorCode::kInvalidArgument, "config: input_dim must be positive");
    require(dataset.image_side == 0 || dataset.image_side * dataset.image_side == dataset.input_dim,
            ErrorCode::kInvalidArgument, "config: image_side² must equal input_dim");
    require(split.base_classes + split.sessions * split.ways <= dataset.classes,
            ErrorCode::kInvalidArgument, "config: split needs more classes than the dataset has");
  } else {
    require(!dataset.train_images.empty() && !dataset.train_labels.empty() &&
                !dataset.test_images.empty() && !dataset.test_labels.empty(),
            ErrorCode::kInvalidArgument, "config: idx dataset needs all four file paths");
  }
  require(encoder.embedding_dim >= 2, ErrorCode::kInvalidArgument, "config: embedding_dim must be >= 2");
  require(seeds >= 1, ErrorCode::kInvalidArgument, "config: seeds must be >= 1");
  require(metrics.histogram_bins >= 4, ErrorCode::kInvalidArgument, "config: histogram_bins must be >= 4");
  require(!output_dir.empty(), ErrorCode::kInvalidArgument, "config: output_dir must be set");
  ib.xz.validate();
  ib.yz.validate();
}

std::vector<std::string> preset_names() { return {"baseline", "baseline_rs", "closer"}; }

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  c.dataset = DatasetConfig{};
  c.split = SplitConfig{};
  c.train.epochs = 30;
  c.train.batch_size = 64;
  c.train.lr = 0.05;
  c.augmentation.noise_std = 1.0;
  if (name == "baseline") {
    c.loss = LossConfig{.tau = 1.0 / 16.0};
  } else if (name == "baseline_rs") {
    c.loss = LossConfig{.tau = 1.0 / 32.0, .lambda_ssc = 0.1};
  } else if (name == "closer") {
    c.loss = LossConfig{.tau = 1.0 / 32.0, .lambda_ssc = 0.1, .lambda_inter = 1.0};
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown preset '" + name + "' (baseline, baseline_rs, closer)");
  }
  c.output_dir = "runs/" + name;
  return c;
}

std::string config_to_json(const ExperimentConfig& config) { return config_json(config).dump(2); }

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
  }
  auto c = config_from(j);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::kIo, "cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_json(ss.str());
}

std::string config_hash(const ExperimentConfig& config) {
  // Output location does not change results, so it stays out of the hash.
  auto j = config_json(config);
  j.erase("output_dir");
  const auto text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t run_seed(const ExperimentConfig& config, std::size_t index) {
  return config.master_seed + index;
}

LoadedData load_data(const ExperimentConfig& config, std::uint64_t seed) {
  const auto& d = config.dataset;
  if (d.kind == "idx") {
    return {cap_per_class(load_idx(d.train_images, d.train_labels), d.max_train_per_class),
            cap_per_class(load_idx(d.test_images, d.test_labels), d.max_test_per_class)};
  }
  GaussianClassesSpec spec;
  spec.classes = d.classes;
  spec.n_per_class = d.train_per_class + d.test_per_class;
  spec.input_dim = d.input_dim;
  spec.center_separation = d.center_separation;
  spec.cluster_std = d.cluster_std;
  spec.modes_per_class = d.modes_per_class;
  spec.mode_spread = d.mode_spread;
  spec.seed = derive_seed(seed, stream::kData);
  if (d.image_side > 0) spec.image = ImageShape{d.image_side, d.image_side};
  auto [train, test] = train_test_split(synth_gaussian_classes(spec), d.test_per_class,
                                        derive_seed(seed, stream::kSplit));
  return {std::move(train), std::move(test)};
}

SessionReport run_single(const ExperimentConfig& config, std::uint64_t seed, EncoderParams* trained) {
  stage("config", [&] { config.validate(); });
  const auto data = stage("data", [&] { return load_data(config, seed); });
  const auto split = stage("split", [&] {
    return make_split(data.train.classes(), config.split.base_classes, config.split.ways,
                      config.split.shots, config.split.sessions, seed);
  });
  const auto sessions = stage("split", [&] { return session_datasets(data.train, split); });

  std::vector<std::size_t> dims{data.train.dim()};
  dims.insert(dims.end(), config.encoder.hidden.begin(), config.encoder.hidden.end());
  dims.push_back(config.encoder.embedding_dim);
  const auto init = stage("encoder", [&] { return init_params(dims, derive_seed(seed, stream::kInit)); });

  TrainConfig train = config.train;
  train.seed = derive_seed(seed, stream::kTrain);
  TrainOptions options;
  options.augmentation = config.augmentation;
  const auto model =
      stage("train", [&] { return train_base(init, sessions.front(), config.loss, train, options); });
  const auto& params = model.params;
  if (trained) *trained = params;

  SessionReport report;
  report.seed = seed;
  report.train_log = model.log;
  report.base_classes = split.base_classes();
  for (std::size_t t = 1; t < split.sessions(); ++t)
    report.new_classes.insert(report.new_classes.end(), split.session_classes[t].begin(),
                              split.session_classes[t].end());
  std::sort(report.new_classes.begin(), report.new_classes.end());

  const Dataset base_test = data.test.filter_classes(report.base_classes);
  report.base_accuracy_before_cr = stage("evaluate", [&] { return classifier_accuracy(model, base_test); });

  PrototypeBank bank = stage("classifier_replace", [&] { return classifier_replace(params, sessions.front()); });
  const PrototypeBank base_bank = bank;
  std::vector<int> new_so_far;
  stage("sessions", [&] {
    for (std::size_t t = 0; t < split.sessions(); ++t) {
      if (t > 0) {
        bank = incremental_update(bank, params, sessions[t]);
        new_so_far.insert(new_so_far.end(), split.session_classes[t].begin(),
                          split.session_classes[t].end());
      }
      const Dataset test = data.test.filter_classes(split.seen_classes(t));
      report.sessions.push_back(evaluate_session(params, bank, test, report.base_classes, t));
      if (t == 0) report.base_accuracy_after_cr = report.sessions.back().base_accuracy.value_or(0.0);
      if (t > 0 && config.metrics.transferability && config.metrics.transferability_per_session) {
        report.transferability_per_session.push_back(
            transferability(params, base_bank, report.base_classes, data.test.filter_classes(new_so_far)));
      }
    }
  });
  if (report.sessions.size() >= 2) report.performance_drop = performance_drop(report.sessions);
  const Dataset final_test = data.test.filter_classes(split.seen_classes(split.sessions() - 1));
  stage("metrics", [&] {
    if (config.metrics.transferability && !report.new_classes.empty()) {
      report.transferability = transferability(params, base_bank, report.base_classes,
                                               data.test.filter_classes(report.new_classes));
    }
    if (config.metrics.spread) {
      report.spread = spread_stats(embed(params, base_test.all_inputs()), base_test.labels(),
                                   base_bank.prototypes());
    }
    if (config.metrics.histogram || config.metrics.features) {
      const Tensor z = embed(params, final_test.all_inputs());
      if (config.metrics.histogram && z.cols() == 2)
        report.histogram = angular_histogram(z, final_test.labels(), config.metrics.histogram_bins);
      if (config.metrics.features) {
        report.features = z;
        report.feature_labels = final_test.labels();
      }
    }
  });
  if (config.metrics.ib) {
    IbPlaneConfig ib = config.ib;
    ib.xz.seed = derive_seed(seed, ib.xz.seed);
    ib.yz.seed = derive_seed(seed, ib.yz.seed + 1);
    report.ib = stage("ib", [&] {
      return ib_plane(params, final_test, report.base_classes, report.new_classes, ib);
    });
  }
  return report;
}

AggregateReport aggregate(const std::vector<SessionReport>& reports) {
  AggregateReport a;
  if (reports.empty()) return a;
  const auto sessions = reports.front().sessions.size();
  for (std::size_t t = 0; t < sessions; ++t) {
    std::vector<std::optional<double>> ab, an;
    std::vector<double> aw;
    for (const auto& r : reports) {
      ab.push_back(r.sessions.at(t).base_accuracy);
      an.push_back(r.sessions.at(t).new_accuracy);
      aw.push_back(r.sessions.at(t).whole_accuracy);
    }
    a.base_accuracy.push_back(mean_std_present(ab));
    a.new_accuracy.push_back(mean_std_present(an));
    a.whole_accuracy.push_back(mean_std(aw));
  }
  std::vector<std::optional<double>> pd, tr, intra, inter;
  std::vector<double> before, after, drop;
  for (const auto& r : reports) {
    pd.push_back(r.performance_drop);
    tr.push_back(r.transferability);
    intra.push_back(r.spread.intra_spread);
    inter.push_back(r.spread.inter_distance);
    before.push_back(r.base_accuracy_before_cr);
    after.push_back(r.base_accuracy_after_cr);
    drop.push_back(r.base_accuracy_before_cr - r.base_accuracy_after_cr);
  }
  a.performance_drop = mean_std_present(pd);
  a.transferability = mean_std_present(tr);
  a.intra_spread = mean_std_present(intra);
  a.inter_distance = mean_std_present(inter);
  a.base_accuracy_before_cr = mean_std(before);
  a.base_accuracy_after_cr = mean_std(after);
  a.cr_drop = mean_std(drop);
  return a;
}

RunResult run(const ExperimentConfig& config, bool write_files) {
  config.validate();
  RunResult result;
  result.config = config;
  result.config_hash = config_hash(config);
  const std::filesystem::path dir = config.output_dir;
  if (write_files) std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < config.seeds; ++i) {
    EncoderParams trained;
    result.reports.push_back(run_single(config, run_seed(config, i), &trained));
    if (write_files) {
      json ck = json::parse(checkpoint_to_json(trained));
      ck["config_hash"] = result.config_hash;
      ck["master_seed"] = config.master_seed;
      write_text(checkpoint_path(dir, i), ck.dump() + "\n");
    }
  }
  result.aggregate = aggregate(result.reports);
  if (write_files) {
    write_summary(result, dir);
    write_sessions_csv(result, dir);
    write_metrics_csv(result, dir);
    if (config.metrics.histogram && config.encoder.embedding_dim == 2) write_histogram_csv(result, dir);
    if (config.metrics.features) write_features_csv(result, dir);
    if (config.metrics.ib) write_ib_csv(result, dir);
  }
  return result;
}

std::vector<AblationRow> ablate(const ExperimentConfig& base, const AblationGrid& grid,
                                bool write_files) {
  require(!grid.low_tau.empty() && !grid.ssc.empty() && !grid.inter.empty(),
          ErrorCode::kInvalidArgument, "ablate: empty grid");
  std::set<std::tuple<bool, bool, bool>> cells;
  for (bool t : grid.low_tau)
    for (bool s : grid.ssc)
      for (bool i : grid.inter) cells.emplace(t, s, i);

  std::vector<AblationRow> rows;
  for (const auto& [t, s, i] : cells) {
    ExperimentConfig c = base;
    c.loss.tau = t ? grid.low_tau_value : grid.baseline_tau;
    c.loss.lambda_ssc = s ? grid.lambda_ssc : 0.0;
    c.loss.lambda_inter = i ? grid.lambda_inter : 0.0;
    c.output_dir = (std::filesystem::path(base.output_dir) /
                    ("cell_tau" + std::to_string(t) + "_ssc" + std::to_string(s) + "_inter" +
                     std::to_string(i)))
                       .string();
    const auto r = run(c, write_files);
    AblationRow row;
    row.low_tau = t;
    row.ssc = s;
    row.inter = i;
    const auto last = r.aggregate.whole_accuracy.size() - 1;
    if (r.aggregate.base_accuracy[last]) row.base_accuracy = r.aggregate.base_accuracy[last]->mean;
    if (r.aggregate.new_accuracy[last]) row.new_accuracy = r.aggregate.new_accuracy[last]->mean;
    row.whole_accuracy = r.aggregate.whole_accuracy[last].mean;
    if (r.aggregate.performance_drop) row.performance_drop = r.aggregate.performance_drop->mean;
    rows.push_back(row);
  }
  if (write_files) {
    std::filesystem::create_directories(base.output_dir);
    std::ostringstream os;
    os << "config_hash,master_seed,low_tau,ssc,inter,A_B,A_N,A_W,PD\n";
    const auto hash = config_hash(base);
    for (const auto& row : rows) {
      os << hash << ',' << base.master_seed << ',' << row.low_tau << ',' << row.ssc << ','
         << row.inter << ',' << num(row.base_accuracy) << ',' << num(row.new_accuracy) << ','
         << num(row.whole_accuracy) << ',' << num(row.performance_drop) << '\n';
    }
    write_text(std::filesystem::path(base.output_dir) / "ablation.csv", os.str());
  }
  return rows;
}

std::vector<std::string> export_families() { return {"metrics", "histograms", "features", "ib"}; }

std::vector<std::filesystem::path> export_run(const std::filesystem::path& run_dir,
                                              const std::string& what) {
  const auto families = export_families();
  require(std::find(families.begin(), families.end(), what) != families.end(),
          ErrorCode::kInvalidArgument,
          "export: unknown family '" + what + "' (metrics, histograms, features, ib)");
  const auto r = load_run(run_dir);
  if (what == "metrics") return {write_sessions_csv(r, run_dir), write_metrics_csv(r, run_dir)};
  if (what == "histograms") {
    require(r.config.encoder.embedding_dim == 2, ErrorCode::kMissingArtifact,
            "histogram export refused: angular histograms need embedding_dim = 2, run has " +
                std::to_string(r.config.encoder.embedding_dim));
    return {write_histogram_csv(r, run_dir)};
  }
  if (what == "features") return {write_features_csv(r, run_dir)};
  return {write_ib_csv(r, run_dir)};
}

RunResult ib_eval(const std::filesystem::path& run_dir) {
  RunResult r = load_run(run_dir);
  for (std::size_t i = 0; i < r.reports.size(); ++i) {
    auto& rep = r.reports[i];
    const auto params = load_checkpoint(checkpoint_path(run_dir, i));
    const auto data = load_data(r.config, rep.seed);
    std::vector<int> seen = rep.base_classes;
    seen.insert(seen.end(), rep.new_classes.begin(), rep.new_classes.end());
    IbPlaneConfig ib = r.config.ib;
    ib.xz.seed = derive_seed(rep.seed, ib.xz.seed);
    ib.yz.seed = derive_seed(rep.seed, ib.yz.seed + 1);
    rep.ib = ib_plane(params, data.test.filter_classes(seen), rep.base_classes, rep.new_classes, ib);
  }
  write_summary(r, run_dir);
  write_ib_csv(r, run_dir);
  return r;
}

}  // namespace closer
