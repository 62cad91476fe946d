#include "sgts/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "sgts/errors.hpp"
#include "sgts/raster.hpp"

namespace sgts {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + text + "'");
  }
  if (used != text.size()) throw ConfigError("expected a number, got '" + text + "'");
  return v;
}

template <typename Int>
Int parse_int(const std::string& text) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("expected an integer, got '" + text + "'");
  }
  return v;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number_field(T RunConfig::*member) {
  if constexpr (std::is_same_v<T, double>) {
    return {[member](RunConfig& c, const std::string& v) { c.*member = parse_double(v); },
            [member](const RunConfig& c) { return fmt_double(c.*member); }};
  } else {
    return {[member](RunConfig& c, const std::string& v) { c.*member = parse_int<T>(v); },
            [member](const RunConfig& c) { return std::to_string(c.*member); }};
  }
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", number_field(&RunConfig::seed)},
      {"image_size", number_field(&RunConfig::image_size)},
      {"num_classes", number_field(&RunConfig::num_classes)},
      {"epochs", number_field(&RunConfig::epochs)},
      {"batch_size", number_field(&RunConfig::batch_size)},
      {"warmup_fraction", number_field(&RunConfig::warmup_fraction)},
      {"alpha_start", number_field(&RunConfig::alpha_start)},
      {"alpha_end", number_field(&RunConfig::alpha_end)},
      {"tau_start", number_field(&RunConfig::tau_start)},
      {"tau_end", number_field(&RunConfig::tau_end)},
      {"ema_beta", number_field(&RunConfig::ema_beta)},
      {"lr_start", number_field(&RunConfig::lr_start)},
      {"lr_end", number_field(&RunConfig::lr_end)},
      {"weight_decay", number_field(&RunConfig::weight_decay)},
      {"clip_norm", number_field(&RunConfig::clip_norm)},
      {"patience", number_field(&RunConfig::patience)},
      {"annot_fraction", number_field(&RunConfig::annot_fraction)},
      {"train_size", number_field(&RunConfig::train_size)},
      {"val_size", number_field(&RunConfig::val_size)},
      {"test_size", number_field(&RunConfig::test_size)},
      {"mode",
       {[](RunConfig& c, const std::string& v) {
          if (v == "teacher_student") {
            c.mode = TrainingMode::kTeacherStudent;
          } else if (v == "warmup_only") {
            c.mode = TrainingMode::kWarmupOnly;
          } else {
            throw ConfigError("mode must be teacher_student or warmup_only, got '" + v + "'");
          }
        },
        [](const RunConfig& c) {
          return std::string(c.mode == TrainingMode::kTeacherStudent ? "teacher_student"
                                                                     : "warmup_only");
        }}},
      {"dice_weight", number_field(&RunConfig::dice_weight)},
      {"cce_weight", number_field(&RunConfig::cce_weight)},
      {"noise_sigma", number_field(&RunConfig::noise_sigma)},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  if (image_size < 32 || image_size % 2 != 0) throw ConfigError("image_size must be even and >= 32");
  if (train_size < 1 || val_size < 1 || test_size < 0) {
    throw ConfigError("train_size and val_size must be >= 1, test_size >= 0");
  }
  if (!(annot_fraction > 0.0 && annot_fraction <= 1.0)) {
    throw ConfigError("annot_fraction must lie in (0, 1]");
  }
  train_config().validate();
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.schedule = ScheduleConfig{epochs,   warmup_fraction, alpha_start, alpha_end, tau_start,
                              tau_end,  lr_start,        lr_end,      ema_beta};
  t.num_classes = num_classes;
  t.batch_size = batch_size;
  t.weight_decay = weight_decay;
  t.clip_norm = clip_norm;
  t.patience = patience;
  t.teacher_enabled = mode == TrainingMode::kTeacherStudent;
  t.supervised = SupervisedWeights{dice_weight, cce_weight};
  t.augment.noise_sigma = noise_sigma;
  t.seed = seed;
  return t;
}

DatasetSpec RunConfig::dataset_spec() const {
  DatasetSpec d;
  d.seed = seed;
  d.train = train_size;
  d.val = val_size;
  d.test = test_size;
  d.size = image_size;
  d.annot_fraction = annot_fraction;
  return d;
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::map<std::string, const Field*> lookup;
  for (const auto& [name, field] : fields()) lookup[name] = &field;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    auto fail = [line_no](const std::string& msg) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + msg);
    };
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = lookup.find(key);
    if (it == lookup.end()) fail("unknown key '" + key + "'");
    if (!seen.insert(key).second) fail("duplicate key '" + key + "'");
    if (value.empty()) fail("missing value for '" + key + "'");
    try {
      it->second->set(config, value);
    } catch (const ConfigError& e) {
      fail(e.what());
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace sgts
