#include "pah/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pah/errors.hpp"

namespace pah {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(out)) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + " expects true or false, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_size(key, trim(item)));
  if (out.empty()) throw ConfigError("config: " + key + " expects a comma-separated list");
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t x : v) out += (out.empty() ? "" : ",") + std::to_string(x);
  return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  ModelConfig& m = model;
  if (key == "input_h") m.input_h = to_size(key, value);
  else if (key == "input_w") m.input_w = to_size(key, value);
  else if (key == "stem_channels") m.stem_channels = to_list(key, value);
  else if (key == "branch_channels") m.branch_channels = to_list(key, value);
  else if (key == "dense_stem_channels") m.dense_stem_channels = to_list(key, value);
  else if (key == "dense_channels") m.dense_channels = to_size(key, value);
  else if (key == "num_parts") m.num_parts = to_size(key, value);
  else if (key == "num_classes") m.num_classes = to_size(key, value);
  else if (key == "lambda_pair") m.lambda_pair = to_double(key, value);
  else if (key == "lambda_psd") m.lambda_psd = to_double(key, value);
  else if (key == "alpha_pos") m.pair.alpha_pos = to_double(key, value);
  else if (key == "alpha_neg") m.pair.alpha_neg = to_double(key, value);
  else if (key == "margin") m.pair.margin = to_double(key, value);
  else if (key == "batch_identities") m.batch_identities = to_size(key, value);
  else if (key == "batch_instances") m.batch_instances = to_size(key, value);
  else if (key == "seed") m.seed = to_size(key, value);
  else if (key == "streams") m.streams = StreamSet::parse(value);
  else if (key == "erase_num") m.erase_num = to_size(key, value);
  else if (key == "erase_den") m.erase_den = to_size(key, value);
  else if (key == "epochs_warmup") epochs_warmup = to_size(key, value);
  else if (key == "epochs_main") epochs_main = to_size(key, value);
  else if (key == "lr_init") lr_init = to_double(key, value);
  else if (key == "lr_peak") lr_peak = to_double(key, value);
  else if (key == "lr_final") lr_final = to_double(key, value);
  else if (key == "optimizer") {
    if (value != "sgd" && value != "adam") {
      throw ConfigError("config: optimizer must be sgd or adam, got '" + value + "'");
    }
    optimizer = value;
  }
  else if (key == "momentum") momentum = to_double(key, value);
  else if (key == "weight_decay") weight_decay = to_double(key, value);
  else if (key == "augment") augment = to_bool(key, value);
  else if (key == "flip_probability") flip_probability = to_double(key, value);
  else if (key == "erase_probability") erase_probability = to_double(key, value);
  else if (key == "dataset") dataset = value;
  else if (key == "out") out = value;
  else if (key == "closed_set") closed_set = to_bool(key, value);
  else if (key == "eval_every") eval_every = to_size(key, value);
  else if (key == "top_k") top_k = to_size(key, value);
  else if (key == "exclude_same_sample") exclude_same_sample = to_bool(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string RunConfig::to_text() const {
  const ModelConfig& m = model;
  std::ostringstream os;
  os << "input_h = " << m.input_h << '\n'
     << "input_w = " << m.input_w << '\n'
     << "stem_channels = " << list(m.stem_channels) << '\n'
     << "branch_channels = " << list(m.branch_channels) << '\n'
     << "dense_stem_channels = " << list(m.dense_stem_channels) << '\n'
     << "dense_channels = " << m.dense_channels << '\n'
     << "num_parts = " << m.num_parts << '\n'
     << "num_classes = " << m.num_classes << '\n'
     << "lambda_pair = " << num(m.lambda_pair) << '\n'
     << "lambda_psd = " << num(m.lambda_psd) << '\n'
     << "alpha_pos = " << num(m.pair.alpha_pos) << '\n'
     << "alpha_neg = " << num(m.pair.alpha_neg) << '\n'
     << "margin = " << num(m.pair.margin) << '\n'
     << "batch_identities = " << m.batch_identities << '\n'
     << "batch_instances = " << m.batch_instances << '\n'
     << "seed = " << m.seed << '\n'
     << "streams = " << m.streams.to_string() << '\n'
     << "erase_num = " << m.erase_num << '\n'
     << "erase_den = " << m.erase_den << '\n'
     << "epochs_warmup = " << epochs_warmup << '\n'
     << "epochs_main = " << epochs_main << '\n'
     << "lr_init = " << num(lr_init) << '\n'
     << "lr_peak = " << num(lr_peak) << '\n'
     << "lr_final = " << num(lr_final) << '\n'
     << "optimizer = " << optimizer << '\n'
     << "momentum = " << num(momentum) << '\n'
     << "weight_decay = " << num(weight_decay) << '\n'
     << "augment = " << (augment ? "true" : "false") << '\n'
     << "flip_probability = " << num(flip_probability) << '\n'
     << "erase_probability = " << num(erase_probability) << '\n'
     << "dataset = " << dataset << '\n'
     << "out = " << out << '\n'
     << "closed_set = " << (closed_set ? "true" : "false") << '\n'
     << "eval_every = " << eval_every << '\n'
     << "top_k = " << top_k << '\n'
     << "exclude_same_sample = " << (exclude_same_sample ? "true" : "false") << '\n';
  return os.str();
}

void RunConfig::validate() const {
  model.validate();
  if (total_epochs() < 1) throw ConfigError("config: need at least one epoch");
  if (!(lr_init <= lr_peak)) throw ConfigError("config: lr_init must not exceed lr_peak");
  if (!(lr_final <= lr_peak)) throw ConfigError("config: lr_final must not exceed lr_peak");
  if (lr_init < 0.0 || lr_final < 0.0) throw ConfigError("config: learning rates must be >= 0");
  if (top_k == 0) throw ConfigError("config: top_k must be >= 1");
}

double lr_schedule(double epoch, const RunConfig& config, bool* clamped) {
  const double warm = static_cast<double>(config.epochs_warmup);
  const double total = static_cast<double>(config.total_epochs());
  bool out_of_range = false;
  if (!(epoch >= 0.0)) {
    epoch = 0.0;
    out_of_range = true;
  } else if (epoch > total) {
    epoch = total;
    out_of_range = true;
  }
  if (clamped) *clamped = out_of_range;
  if (epoch < warm) {
    return config.lr_init + (config.lr_peak - config.lr_init) * (epoch / warm);
  }
  if (config.epochs_main == 0) return config.lr_peak;
  const double t = (epoch - warm) / static_cast<double>(config.epochs_main);
  return config.lr_peak -
         (config.lr_peak - config.lr_final) * (1.0 - std::cos(std::numbers::pi * t)) / 2.0;
}

}  // namespace pah
