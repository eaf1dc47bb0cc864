#include "config.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace invloc {
namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Reads one section's keys, remembering which were consumed.
class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }

  std::string str(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    if (!has(key)) return fallback;
    return trim(tree_->find(key)->second.data());
  }

  template <class T>
  T number(const std::string& key, T fallback) {
    if (!has(key)) {
      used_.insert(key);
      return fallback;
    }
    const std::string v = str(key, "");
    try {
      std::size_t pos = 0;
      T out;
      if constexpr (std::is_floating_point_v<T>) out = static_cast<T>(std::stod(v, &pos));
      else if constexpr (std::is_unsigned_v<T>) out = static_cast<T>(std::stoull(v, &pos));
      else out = static_cast<T>(std::stoll(v, &pos));
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw Error("config: " + where(key) + " expects a number, got '" + v + "'");
    }
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) {
      used_.insert(key);
      return fallback;
    }
    const std::string v = str(key, "");
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw Error("config: " + where(key) + " expects true/false, got '" + v + "'");
  }

  std::vector<std::string> list(const std::string& key, const std::vector<std::string>& fallback) {
    if (!has(key)) {
      used_.insert(key);
      return fallback;
    }
    return split_list(str(key, ""));
  }

  fs::path path(const std::string& key, const fs::path& base) {
    const std::string v = str(key, "");
    if (v.empty()) return {};
    const fs::path p(v);
    return p.is_absolute() ? p : base / p;
  }

  void reject_unknown() const {
    if (!tree_) return;
    for (const auto& [key, child] : *tree_)
      if (!used_.contains(key)) throw Error("config: unknown key " + where(key));
  }

  std::string where(const std::string& key) const { return name_.empty() ? "'" + key + "'" : "'[" + name_ + "] " + key + "'"; }

 private:
  std::string name_;
  const pt::ptree* tree_;
  std::set<std::string> used_;
};

SubsetMode parse_subset(const std::string& v) {
  if (v == "strided") return SubsetMode::strided;
  if (v == "contiguous") return SubsetMode::contiguous;
  throw Error("config: subset must be strided or contiguous, got '" + v + "'");
}

std::string subset_name(SubsetMode m) { return m == SubsetMode::strided ? "strided" : "contiguous"; }

std::string layout_name(DirectoryLayout l) { return l == DirectoryLayout::flat ? "flat" : "per_condition"; }

}  // namespace

fs::path PipelineConfig::dataset_root() const { return dataset.root.empty() ? output_dir / "dataset" : dataset.root; }

CycleGanSpec PipelineConfig::cyclegan_spec() const {
  CycleGanSpec spec;
  spec.generator.image_size = dataset.image_size;
  spec.generator.base_channels = gan.base_channels;
  spec.discriminator.base_channels = gan.disc_base_channels;
  spec.discriminator.layers = gan.disc_layers;
  return spec;
}

GanTrainConfig PipelineConfig::gan_config() const {
  GanTrainConfig c = gan.train;
  c.image_size = dataset.image_size;
  c.seed = substream_seed(seed, "gan");
  return c;
}

PoseTrainConfig PipelineConfig::pose_config(int repeat) const {
  PoseTrainConfig c = pose.train;
  c.seed = substream_seed(seed, "pose/" + std::to_string(repeat));
  return c;
}

void PipelineConfig::validate() const {
  if (dataset.synthetic && dataset.frames < 2) throw Error("config: [dataset] frames must be at least 2");
  if (dataset.image_size < 8) throw Error("config: [dataset] image_size too small");
  if (dataset.conditions.empty() && dataset.synthetic) throw Error("config: [dataset] conditions is empty");
  if (dataset.domain_a.empty()) throw Error("config: [dataset] domain_a is empty");
  if (dataset.domain_b.empty()) throw Error("config: [dataset] domain_b is empty");
  gan_config().validate();
  cyclegan_spec().generator.validate();
  if (features.layer != "auto" && generator_layer_index(features.layer) < 0)
    throw Error("config: [features] layer '" + features.layer + "' is not a generator layer");
  for (const auto& l : features.layers)
    if (generator_layer_index(l) < 0) throw Error("config: [features] layers lists unknown layer '" + l + "'");
  if (features.frames < 2 || placerec.frames < 2) throw Error("config: frames must be at least 2");
  if (placerec.tolerance < 0) throw Error("config: [placerec] tolerance must be non-negative");
  if (placerec.grid_rows < 1) throw Error("config: [placerec] grid_rows must be positive");
  if (!placerec.import_matrix.empty() && (placerec.import_query.empty() || placerec.import_db.empty()))
    throw Error("config: [placerec] import needs import_query and import_db");
  pose.train.validate();
  if (pose.train_conditions.empty()) throw Error("config: [pose] train_conditions is empty");
  if (pose.repeats < 1) throw Error("config: [pose] repeats must be positive");
}

PipelineConfig parse_pipeline_config(const std::string& text, const fs::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  static const std::set<std::string> sections{"dataset", "gan", "features", "placerec", "pose"};
  pt::ptree top;
  std::map<std::string, const pt::ptree*> found;
  for (const auto& [key, child] : tree) {
    if (sections.contains(key)) found[key] = &child;
    else if (child.empty()) top.push_back({key, child});
    else throw Error("config: unknown section [" + key + "]");
  }
  auto section = [&](const std::string& name) {
    auto it = found.find(name);
    return Section(name, it == found.end() ? nullptr : it->second);
  };

  PipelineConfig c;
  Section root("", &top);
  c.seed = root.number<std::uint64_t>("seed", 0);
  c.output_dir = root.path("output_dir", base_dir);
  if (c.output_dir.empty()) c.output_dir = base_dir / "out";
  root.reject_unknown();

  Section ds = section("dataset");
  c.dataset.root = ds.path("root", base_dir);
  const std::string layout = ds.str("layout", "per_condition");
  if (layout == "flat") c.dataset.layout = DirectoryLayout::flat;
  else if (layout != "per_condition") throw Error("config: [dataset] layout must be flat or per_condition");
  c.dataset.synthetic = ds.flag("synthetic", c.dataset.synthetic);
  c.dataset.conditions = ds.list("conditions", c.dataset.conditions);
  c.dataset.frames = ds.number<int>("frames", c.dataset.frames);
  c.dataset.image_size = ds.number<int>("image_size", c.dataset.image_size);
  c.dataset.domain_a = ds.list("domain_a", c.dataset.domain_a);
  c.dataset.domain_b = ds.str("domain_b", c.dataset.domain_b);
  c.dataset.correspondences = ds.path("correspondences", base_dir);
  c.dataset.poses = ds.path("poses", base_dir);
  ds.reject_unknown();

  Section gan = section("gan");
  auto& g = c.gan.train;
  g.omega = gan.number<double>("omega", g.omega);
  g.lr = gan.number<double>("lr", g.lr);
  g.batch_size = gan.number<int>("batch_size", g.batch_size);
  g.adam_beta1 = gan.number<double>("adam_beta1", g.adam_beta1);
  g.adam_beta2 = gan.number<double>("adam_beta2", g.adam_beta2);
  g.adam_eps = gan.number<double>("adam_eps", g.adam_eps);
  g.max_iters = gan.number<std::int64_t>("max_iters", g.max_iters);
  g.checkpoint_every = gan.number<std::int64_t>("checkpoint_every", g.checkpoint_every);
  g.loss_form = parse_loss_form(gan.str("loss_form", to_string(g.loss_form)));
  c.gan.base_channels = gan.number<int>("base_channels", c.gan.base_channels);
  c.gan.disc_base_channels = gan.number<int>("disc_base_channels", c.gan.disc_base_channels);
  c.gan.disc_layers = gan.number<int>("disc_layers", c.gan.disc_layers);
  gan.reject_unknown();

  Section fe = section("features");
  c.features.layer = fe.str("layer", c.features.layer);
  c.features.layers = fe.list("layers", c.features.layers);
  c.features.query_condition = fe.str("query_condition", c.features.query_condition);
  c.features.db_condition = fe.str("db_condition", c.features.db_condition);
  c.features.frames = fe.number<int>("frames", c.features.frames);
  c.features.subset = parse_subset(fe.str("subset", subset_name(c.features.subset)));
  c.features.cache = fe.flag("cache", c.features.cache);
  fe.reject_unknown();

  Section pr = section("placerec");
  c.placerec.tolerance = pr.number<int>("tolerance", c.placerec.tolerance);
  const std::string th = pr.str("thresholds", "auto");
  if (th != "auto")
    for (const auto& v : split_list(th)) {
      try {
        c.placerec.thresholds.push_back(std::stod(v));
      } catch (const std::exception&) {
        throw Error("config: [placerec] thresholds must be 'auto' or a list of numbers");
      }
    }
  c.placerec.conditions = pr.list("conditions", c.placerec.conditions);
  c.placerec.frames = pr.number<int>("frames", c.placerec.frames);
  c.placerec.subset = parse_subset(pr.str("subset", subset_name(c.placerec.subset)));
  c.placerec.grid_rows = pr.number<int>("grid_rows", c.placerec.grid_rows);
  c.placerec.import_matrix = pr.path("import", base_dir);
  c.placerec.import_query = pr.str("import_query", "");
  c.placerec.import_db = pr.str("import_db", "");
  pr.reject_unknown();

  Section po = section("pose");
  auto& p = c.pose.train;
  p.beta = po.number<double>("beta", p.beta);
  p.lr = po.number<double>("lr", p.lr);
  p.batch_size = po.number<int>("batch_size", p.batch_size);
  p.max_iters = po.number<std::int64_t>("max_iters", p.max_iters);
  p.init_std = po.number<double>("init_std", p.init_std);
  p.input_size = po.number<int>("input_size", p.input_size);
  p.channel_policy = parse_channel_policy(po.str("channel_policy", to_string(p.channel_policy)));
  p.width = po.number<int>("width", p.width);
  p.hidden = po.number<int>("hidden", p.hidden);
  c.pose.train_conditions = po.list("train_conditions", c.pose.train_conditions);
  c.pose.eval_condition = po.str("eval_condition", c.pose.eval_condition);
  const std::string split = po.str("split", "interleaved");
  if (split == "shared") c.pose.split = PoseSplit::shared;
  else if (split != "interleaved") throw Error("config: [pose] split must be interleaved or shared");
  c.pose.baselines = po.flag("baselines", c.pose.baselines);
  c.pose.repeats = po.number<int>("repeats", c.pose.repeats);
  po.reject_unknown();

  if (const char* env = std::getenv("INVLOC_OUT"); env && *env) c.output_dir = fs::path(env);
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  PipelineConfig c = parse_pipeline_config(ss.str(), fs::absolute(path).parent_path());
  c.source = path;
  return c;
}

std::string format_pipeline_config(const PipelineConfig& c) {
  std::ostringstream os;
  os << "seed = " << c.seed << "\n";
  os << "output_dir = " << c.output_dir.string() << "\n\n";
  os << "[dataset]\n";
  if (!c.dataset.root.empty()) os << "root = " << c.dataset.root.string() << "\n";
  os << "layout = " << layout_name(c.dataset.layout) << "\n";
  os << "synthetic = " << (c.dataset.synthetic ? "true" : "false") << "\n";
  os << "conditions = " << join(c.dataset.conditions) << "\n";
  os << "frames = " << c.dataset.frames << "\n";
  os << "image_size = " << c.dataset.image_size << "\n";
  os << "domain_a = " << join(c.dataset.domain_a) << "\n";
  os << "domain_b = " << c.dataset.domain_b << "\n";
  if (!c.dataset.correspondences.empty()) os << "correspondences = " << c.dataset.correspondences.string() << "\n";
  if (!c.dataset.poses.empty()) os << "poses = " << c.dataset.poses.string() << "\n";
  const auto& g = c.gan.train;
  os << "\n[gan]\n";
  os << "omega = " << fmt(g.omega) << "\nlr = " << fmt(g.lr) << "\nbatch_size = " << g.batch_size << "\n";
  os << "adam_beta1 = " << fmt(g.adam_beta1) << "\nadam_beta2 = " << fmt(g.adam_beta2)
     << "\nadam_eps = " << fmt(g.adam_eps) << "\n";
  os << "max_iters = " << g.max_iters << "\ncheckpoint_every = " << g.checkpoint_every << "\n";
  os << "loss_form = " << to_string(g.loss_form) << "\n";
  os << "base_channels = " << c.gan.base_channels << "\ndisc_base_channels = " << c.gan.disc_base_channels
     << "\ndisc_layers = " << c.gan.disc_layers << "\n";
  os << "\n[features]\n";
  os << "layer = " << c.features.layer << "\n";
  if (!c.features.layers.empty()) os << "layers = " << join(c.features.layers) << "\n";
  os << "query_condition = " << c.features.query_condition << "\ndb_condition = " << c.features.db_condition << "\n";
  os << "frames = " << c.features.frames << "\nsubset = " << subset_name(c.features.subset) << "\n";
  os << "cache = " << (c.features.cache ? "true" : "false") << "\n";
  os << "\n[placerec]\n";
  os << "tolerance = " << c.placerec.tolerance << "\n";
  if (c.placerec.thresholds.empty()) {
    os << "thresholds = auto\n";
  } else {
    os << "thresholds = ";
    for (std::size_t i = 0; i < c.placerec.thresholds.size(); ++i) os << (i ? "," : "") << fmt(c.placerec.thresholds[i]);
    os << "\n";
  }
  if (!c.placerec.conditions.empty()) os << "conditions = " << join(c.placerec.conditions) << "\n";
  os << "frames = " << c.placerec.frames << "\nsubset = " << subset_name(c.placerec.subset) << "\n";
  os << "grid_rows = " << c.placerec.grid_rows << "\n";
  if (!c.placerec.import_matrix.empty())
    os << "import = " << c.placerec.import_matrix.string() << "\nimport_query = " << c.placerec.import_query
       << "\nimport_db = " << c.placerec.import_db << "\n";
  const auto& p = c.pose.train;
  os << "\n[pose]\n";
  os << "beta = " << fmt(p.beta) << "\nlr = " << fmt(p.lr) << "\nbatch_size = " << p.batch_size << "\n";
  os << "max_iters = " << p.max_iters << "\ninit_std = " << fmt(p.init_std) << "\ninput_size = " << p.input_size << "\n";
  os << "channel_policy = " << to_string(p.channel_policy) << "\nwidth = " << p.width << "\nhidden = " << p.hidden
     << "\n";
  os << "train_conditions = " << join(c.pose.train_conditions) << "\neval_condition = " << c.pose.eval_condition
     << "\n";
  os << "split = " << (c.pose.split == PoseSplit::shared ? "shared" : "interleaved") << "\n";
  os << "baselines = " << (c.pose.baselines ? "true" : "false") << "\nrepeats = " << c.pose.repeats << "\n";
  return os.str();
}

json to_json(const PipelineConfig& c) {
  // paths are left out so reports do not depend on where the run lives
  json thresholds = c.placerec.thresholds.empty() ? json("auto") : json(c.placerec.thresholds);
  return {{"seed", c.seed},
          {"dataset",
           {{"synthetic", c.dataset.synthetic},
            {"conditions", c.dataset.conditions},
            {"frames", c.dataset.frames},
            {"image_size", c.dataset.image_size},
            {"domain_a", c.dataset.domain_a},
            {"domain_b", c.dataset.domain_b}}},
          {"gan",
           {{"train", to_json(c.gan_config())},
            {"base_channels", c.gan.base_channels},
            {"disc_base_channels", c.gan.disc_base_channels},
            {"disc_layers", c.gan.disc_layers}}},
          {"features",
           {{"layer", c.features.layer},
            {"layers", c.features.layers},
            {"query_condition", c.features.query_condition},
            {"db_condition", c.features.db_condition},
            {"frames", c.features.frames},
            {"subset", subset_name(c.features.subset)}}},
          {"placerec",
           {{"tolerance", c.placerec.tolerance},
            {"thresholds", thresholds},
            {"conditions", c.placerec.conditions},
            {"frames", c.placerec.frames},
            {"subset", subset_name(c.placerec.subset)}}},
          {"pose",
           {{"train", to_json(c.pose.train)},
            {"train_conditions", c.pose.train_conditions},
            {"eval_condition", c.pose.eval_condition},
            {"split", c.pose.split == PoseSplit::shared ? "shared" : "interleaved"},
            {"baselines", c.pose.baselines},
            {"repeats", c.pose.repeats}}}};
}

}  // namespace invloc
