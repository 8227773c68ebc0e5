// Text ingestion and the flat key-value serialization used by the CLI.
// Data files: one observation per line, blanks and '#' comments skipped.
// Model files: key<TAB>value per line, arrays comma-joined, doubles with 17
// significant digits so a save/load round trip is bit-stable.
#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lmmix/emfit.hpp"

namespace lmmix {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

namespace detail {

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

inline double parse_double(const std::string& text, const std::string& context) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error(context + ": not a number: '" + text + "'");
  }
  while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  if (pos != text.size())
    throw std::runtime_error(context + ": trailing characters after number: '" + text + "'");
  return v;
}

}  // namespace detail

inline std::vector<double> split_doubles(const std::string& text, const std::string& context) {
  std::vector<double> out;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, ',')) out.push_back(detail::parse_double(item, context));
  return out;
}

// One numeric observation per line; '#' starts a comment, blank lines are
// skipped. Malformed lines are reported with their 1-based line number.
inline std::vector<double> read_observations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file: " + path);
  std::vector<double> data;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t begin = line.find_first_not_of(" \t");
    if (begin == std::string::npos) continue;
    const std::size_t end = line.find_last_not_of(" \t");
    data.push_back(detail::parse_double(line.substr(begin, end - begin + 1),
                                        path + ":" + std::to_string(line_no)));
  }
  return data;
}

// key<TAB>value pairs; same comment and blank-line rules as data files.
inline std::map<std::string, std::string> read_key_value(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected key<TAB>value");
    kv[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return kv;
}

inline constexpr const char* kModelFormat = "lmmix-model-1";

inline void save_model(std::ostream& out, const MixtureModel& model, double loglik_value,
                       bool converged, int iterations) {
  model.validate();
  const bool discrete = model.components.front().family.is_discrete();
  out << "format\t" << kModelFormat << "\n";
  out << "family\t" << (discrete ? "binomial" : "normal") << "\n";
  if (discrete) {
    out << "n\t" << model.components.front().family.trials() << "\n";
  } else {
    std::vector<double> sigmas;
    for (const Component& c : model.components) sigmas.push_back(c.family.sigma0());
    out << "sigma\t" << join_doubles(sigmas) << "\n";
  }
  out << "order\t" << model.components.size() << "\n";
  std::vector<double> mus, rhos;
  for (const Component& c : model.components) {
    mus.push_back(c.mu);
    rhos.push_back(c.rho);
  }
  out << "mu\t" << join_doubles(mus) << "\n";
  out << "rho\t" << join_doubles(rhos) << "\n";
  for (std::size_t l = 0; l < model.components.size(); ++l) {
    const Lambda& lam = model.components[l].lambda;
    out << "lambda_" << l << "\t"
        << join_doubles({lam[0], lam[1], lam[2], lam[3]}) << "\n";
  }
  out << "loglik\t" << format_double(loglik_value) << "\n";
  out << "converged\t" << (converged ? 1 : 0) << "\n";
  out << "iterations\t" << iterations << "\n";
}

inline void save_model_file(const std::string& path, const MixtureModel& model,
                            double loglik_value, bool converged, int iterations) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  save_model(out, model, loglik_value, converged, iterations);
}

struct LoadedModel {
  MixtureModel model;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
};

inline LoadedModel load_model_file(const std::string& path) {
  const auto kv = read_key_value(path);
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error(path + ": missing key '" + key + "'");
    return it->second;
  };
  if (need("format") != kModelFormat)
    throw std::runtime_error(path + ": unsupported format '" + need("format") + "'");

  const std::string family_name = need("family");
  const std::vector<double> mus = split_doubles(need("mu"), path + ": mu");
  const std::vector<double> rhos = split_doubles(need("rho"), path + ": rho");
  const std::size_t order = std::stoul(need("order"));
  if (mus.size() != order || rhos.size() != order)
    throw std::runtime_error(path + ": order disagrees with mu/rho lengths");

  LoadedModel loaded;
  std::vector<double> sigmas;
  int trials = 0;
  if (family_name == "normal") {
    sigmas = split_doubles(need("sigma"), path + ": sigma");
    if (sigmas.size() != order) throw std::runtime_error(path + ": sigma length mismatch");
  } else if (family_name == "binomial") {
    trials = std::stoi(need("n"));
  } else {
    throw std::runtime_error(path + ": unknown family '" + family_name + "'");
  }

  for (std::size_t l = 0; l < order; ++l) {
    const BaseFamily fam = family_name == "normal" ? BaseFamily::normal(sigmas[l])
                                                   : BaseFamily::binomial(trials);
    const std::vector<double> lam =
        split_doubles(need("lambda_" + std::to_string(l)), path + ": lambda_" + std::to_string(l));
    if (lam.size() != std::size_t(kOrder))
      throw std::runtime_error(path + ": lambda_" + std::to_string(l) + " needs 4 values");
    Component c{rhos[l], mus[l], fam, {lam[0], lam[1], lam[2], lam[3]}, int(l)};
    loaded.model.components.push_back(c);
  }
  loaded.model.validate();
  loaded.loglik = detail::parse_double(need("loglik"), path + ": loglik");
  loaded.converged = need("converged") == "1";
  loaded.iterations = std::stoi(need("iterations"));
  return loaded;
}

}  // namespace lmmix
