#include <charconv>
#include <fstream>
#include <sstream>

#include "han/errors.hpp"
#include "han/train.hpp"

namespace han {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw UsageError("invalid integer for " + key + ": '" + v + "'");
  }
  return out;
}

Real parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  Real out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw UsageError("invalid number for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("invalid boolean for " + key + ": '" + v + "'");
}

// Shortest text that parses back to the same double.
std::string real_text(Real v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::StrongPaired: return "strong_paired";
    case TrainMode::SoftPaired: return "soft_paired";
    case TrainMode::Restoration: return "restoration";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "strong_paired") return TrainMode::StrongPaired;
  if (s == "soft_paired") return TrainMode::SoftPaired;
  if (s == "restoration") return TrainMode::Restoration;
  throw UsageError("unknown mode '" + s + "' (strong_paired|soft_paired|restoration)");
}

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{
      "mode",          "variant",      "schedule",   "batch_size",       "steps",
      "epochs",        "learning_rate", "adam_beta1", "adam_beta2",       "adam_epsilon",
      "seed",          "checkpoint_every", "log_every", "lambda_p",      "lambda_a",
      "classic_dis_loss", "mask_coverage", "base_channels", "clock"};
  return k;
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "mode") mode = parse_train_mode(v);
  else if (key == "variant") variant = parse_variant(v);
  else if (key == "schedule") schedule = parse_weight_schedule(v);
  else if (key == "batch_size") batch_size = parse_int<std::size_t>(key, v);
  else if (key == "steps") steps = parse_int<std::size_t>(key, v);
  else if (key == "epochs") epochs = parse_int<std::size_t>(key, v);
  else if (key == "learning_rate") learning_rate = parse_real(key, v);
  else if (key == "adam_beta1") adam_beta1 = parse_real(key, v);
  else if (key == "adam_beta2") adam_beta2 = parse_real(key, v);
  else if (key == "adam_epsilon") adam_epsilon = parse_real(key, v);
  else if (key == "seed") seed = parse_int<std::uint64_t>(key, v);
  else if (key == "checkpoint_every") checkpoint_every = parse_int<std::size_t>(key, v);
  else if (key == "log_every") log_every = parse_int<std::size_t>(key, v);
  else if (key == "lambda_p") lambda_p = parse_real(key, v);
  else if (key == "lambda_a") lambda_a = parse_real(key, v);
  else if (key == "classic_dis_loss") classic_dis_loss = parse_bool(key, v);
  else if (key == "mask_coverage") mask_coverage = parse_real(key, v);
  else if (key == "base_channels") base_channels = parse_int<std::size_t>(key, v);
  else if (key == "clock") {
    if (v != "wall" && v != "none") throw UsageError("clock must be wall or none, got '" + v + "'");
    clock = v;
  } else {
    throw UsageError("unknown config key '" + key + "'");
  }
}

std::string TrainConfig::get(const std::string& key) const {
  if (key == "mode") return to_string(mode);
  if (key == "variant") return to_string(variant);
  if (key == "schedule") return to_string(schedule);
  if (key == "batch_size") return std::to_string(batch_size);
  if (key == "steps") return std::to_string(steps);
  if (key == "epochs") return std::to_string(epochs);
  if (key == "learning_rate") return real_text(learning_rate);
  if (key == "adam_beta1") return real_text(adam_beta1);
  if (key == "adam_beta2") return real_text(adam_beta2);
  if (key == "adam_epsilon") return real_text(adam_epsilon);
  if (key == "seed") return std::to_string(seed);
  if (key == "checkpoint_every") return std::to_string(checkpoint_every);
  if (key == "log_every") return std::to_string(log_every);
  if (key == "lambda_p") return real_text(lambda_p);
  if (key == "lambda_a") return real_text(lambda_a);
  if (key == "classic_dis_loss") return classic_dis_loss ? "true" : "false";
  if (key == "mask_coverage") return real_text(mask_coverage);
  if (key == "base_channels") return std::to_string(base_channels);
  if (key == "clock") return clock;
  throw UsageError("unknown config key '" + key + "'");
}

std::string TrainConfig::to_kv() const {
  std::string out;
  for (const auto& k : keys()) out += k + "=" + get(k) + "\n";
  return out;
}

void TrainConfig::apply_kv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + " is not key=value: '" + t + "'");
    }
    set(trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

TrainConfig TrainConfig::from_kv(const std::string& text) {
  TrainConfig cfg;
  cfg.apply_kv(text);
  return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_kv(ss.str());
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.base_channels = base_channels;
  return m;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw UsageError("batch_size must be at least 1");
  if (log_every == 0) throw UsageError("log_every must be at least 1");
  if (base_channels == 0) throw UsageError("base_channels must be at least 1");
  if (!(learning_rate > 0)) throw UsageError("learning_rate must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw UsageError("adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0)) throw UsageError("adam_epsilon must be positive");
  if (!(mask_coverage >= 0 && mask_coverage <= 1)) throw UsageError("mask_coverage must lie in [0, 1]");
  if (!(lambda_p >= 0) || !(lambda_a >= 0)) throw UsageError("lambda_p and lambda_a must be non-negative");
}

}  // namespace han
