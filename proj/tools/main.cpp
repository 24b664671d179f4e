// Copyright 2026 The crspin Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// crspin command-line driver.
//
// Exit codes: 0 success, 1 failed criteria or self-test checks, 2 usage,
// 3 configuration, 4 file IO, 5 data or fit. Errors go to stderr as
// "crspin: error: <kind>: <message>".

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crspin/detection.hpp"
#include "crspin/errors.hpp"
#include "crspin/fitting.hpp"
#include "crspin/kernels.hpp"
#include "crspin/params.hpp"
#include "crspin/sequences.hpp"
#include "crspin/suite.hpp"

namespace {

using namespace crspin;
using nlohmann::json;

constexpr std::uint64_t kDefaultSeed = 1063110;

enum Exit { ok = 0, failed = 1, usage = 2, config = 3, io = 4, data = 5 };

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad input file contents; `line` is 1-based, 0 when unknown.
struct DataError : std::runtime_error {
  DataError(std::size_t line, const std::string& m)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + m : m) {}
};

struct Options {
  std::string config_path;
  std::string out;
  std::string input;
  std::optional<std::uint64_t> seed;
  std::string protocol;
  std::string model;
  std::string format = "csv";
};

std::string hex(std::uint64_t h) {
  char b[20];
  std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(h));
  return b;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f.flush()) throw IoError("write failed: " + path);
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    write_file(path, text);
}

// Config file (or defaults) with --seed applied.
RunConfig resolve(const Options& o) {
  RunConfig cfg = load_config_file(o.config_path);
  if (o.seed) cfg.detection.rng_seed = *o.seed;
  validate(cfg);
  return cfg;
}

json provenance(const RunConfig& cfg) {
  return {{"seed", cfg.detection.rng_seed},
          {"config_hash", hex(config_hash(cfg))},
          {"config", json::parse(serialize_config(cfg))}};
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      f.push_back(cur);
      cur.clear();
    } else if (ch != ' ' && ch != '\t') {
      cur += ch;
    }
  }
  f.push_back(cur);
  return f;
}

int column(const std::vector<std::string>& header, std::initializer_list<const char*> names) {
  for (const char* n : names)
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == n) return static_cast<int>(i);
  return -1;
}

// Header row mandatory. x and y come from x/sweep_value/axis and
// y/sampled_counts/value, else the first two columns; sigma is optional.
FitData read_csv(std::istream& in, bool& has_sigma) {
  std::string line;
  std::size_t ln = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    header = split(line);
    break;
  }
  if (header.size() < 2) throw DataError(ln, "header needs at least two columns");
  int xi = column(header, {"x", "sweep_value", "axis"});
  int yi = column(header, {"y", "sampled_counts", "value"});
  const int si = column(header, {"sigma"});
  if (xi < 0) xi = 0;
  if (yi < 0) yi = xi == 0 ? 1 : 0;
  has_sigma = si >= 0;

  FitData d;
  while (std::getline(in, line)) {
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size())
      throw DataError(ln, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    auto num = [&](int i) {
      const std::string& s = f[static_cast<std::size_t>(i)];
      double v = 0.0;
      const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        throw DataError(ln, "column '" + header[static_cast<std::size_t>(i)] + "': not a number: '" + s + "'");
      return v;
    };
    d.x.push_back(num(xi));
    d.y.push_back(num(yi));
    d.sigma.push_back(has_sigma ? num(si) : std::sqrt(std::max(d.y.back(), 1.0)));
  }
  if (d.size() == 0) throw DataError(0, "no data rows");
  return d;
}

int simulate(const Options& o) {
  RunConfig cfg = resolve(o);
  if (!o.protocol.empty()) {
    const ProtocolId id = protocol_from_string(o.protocol);
    if (id != cfg.protocol.id) cfg.protocol.grid.clear();
    cfg.protocol.id = id;
  }
  cfg = calibrated(cfg);
  const SweepResult r = run_protocol(cfg);
  json prov = provenance(cfg);
  prov["protocol"] = std::string(to_string(cfg.protocol.id));
  if (o.format == "json") {
    json doc = prov;
    doc["sweep_label"] = r.sweep_label;
    doc["sweep_value"] = r.sweep_value;
    doc["mean_counts"] = r.mean_counts;
    doc["sampled_counts"] = r.sampled_counts;
    doc["sigma"] = r.sigma;
    emit(o.out, doc.dump(2) + "\n");
  } else {
    std::ostringstream os;
    r.write_csv(os);
    emit(o.out, os.str());
    write_file(o.out + ".json", prov.dump(2) + "\n");
  }
  return ok;
}

int fit_command(const Options& o) {
  const RunConfig cfg = resolve(o);
  const ModelId id = model_from_string(o.model);
  std::ifstream in(o.input, std::ios::binary);
  if (!in) throw IoError("cannot open " + o.input);
  bool has_sigma = true;
  const FitData d = read_csv(in, has_sigma);
  if (!has_sigma) std::cerr << "crspin: warning: no sigma column in " << o.input << "; using sqrt(max(y, 1))\n";

  FitModel m = make_model(id);
  if (cfg.protocol.settings.echo_tau == EchoTauConvention::full_free_time) m.tau_factor = 1.0;
  GuessHints h;
  if (const auto* r = std::get_if<RamanModel>(&cfg.defect.t1_model)) h.raman_exponent = r->exponent;
  FitResult res;
  try {
    res = fit(m, d, initial_guess(m, d, h));
  } catch (const DomainError& e) {
    // data row i sits on line i + 2 below the header
    if (e.index() == DomainError::npos) throw;
    throw DataError(e.index() + 2, e.what());
  }

  json prov = provenance(cfg);
  prov["input"] = o.input;
  prov["data_fingerprint"] = hex(res.fingerprint);
  prov["sigma_column"] = has_sigma;
  if (o.format == "json") {
    json doc = json::parse(fit_report_json(res));
    doc.update(prov);
    emit(o.out, doc.dump(2) + "\n");
  } else {
    std::ostringstream os;
    os.precision(17);
    os << "name,unit,value,error,fixed\n";
    for (std::size_t i = 0; i < res.theta.size(); ++i)
      os << res.names[i] << ',' << res.units[i] << ',' << res.theta[i] << ',' << res.errors[i] << ','
         << (res.fixed[i] ? 1 : 0) << '\n';
    emit(o.out, os.str());
    prov["reduced_chi2"] = res.reduced_chi2;
    prov["converged"] = res.converged;
    if (!o.out.empty() && o.out != "-") write_file(o.out + ".json", prov.dump(2) + "\n");
  }
  return ok;
}

std::string csv_field(const std::string& s) {
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

int paper_suite(const Options& o) {
  SuiteOptions so;
  so.seed = o.seed.value_or(kDefaultSeed);
  const RunConfig cfg = suite_config(so);
  const auto rows = run_acceptance(so, [](const CriterionResult& r) { std::cout << format_row(r) << std::endl; });
  int fails = 0;
  std::ostringstream csv;
  csv << "criterion,name,result,seconds,detail,seed,config_hash\n";
  for (const auto& r : rows) {
    fails += r.pass ? 0 : 1;
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.1f", r.seconds);
    csv << r.number << ',' << csv_field(r.name) << ',' << (r.pass ? "PASS" : "FAIL") << ',' << secs << ','
        << csv_field(r.detail) << ',' << so.seed << ',' << hex(config_hash(cfg)) << '\n';
  }
  std::cout << fails << " of " << rows.size() << " criteria failed\n";
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    const std::string base = (std::filesystem::path(o.out) / "paper_suite").string();
    if (o.format == "json") {
      json doc = provenance(cfg);
      doc["rows"] = json::array();
      for (const auto& r : rows)
        doc["rows"].push_back(
            {{"criterion", r.number}, {"name", r.name}, {"pass", r.pass}, {"seconds", r.seconds}, {"detail", r.detail}});
      write_file(base + ".json", doc.dump(2) + "\n");
    } else {
      write_file(base + ".csv", csv.str());
    }
  }
  return fails ? failed : ok;
}

int selftest(const Options& o) {
  int fails = 0;
  auto report = [&](bool pass, const std::string& what) {
    fails += pass ? 0 : 1;
    std::cout << (pass ? "PASS " : "FAIL ") << what << '\n';
  };

  if (kernels::isa_available(kernels::Isa::avx2)) {
    constexpr std::size_t n = 4;
    std::vector<kernels::cplx> a(n * n), b(n * n), c0(n * n), c1(n * n);
    for (std::size_t i = 0; i < n * n; ++i) {
      a[i] = {std::sin(1.0 + i), std::cos(2.0 * i)};
      b[i] = {std::cos(0.5 * i), std::sin(3.0 - i)};
    }
    kernels::scalar_table().cmatmul(a.data(), b.data(), c0.data(), n);
    kernels::avx2_table().cmatmul(a.data(), b.data(), c1.data(), n);
    double dev = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) dev = std::max(dev, std::abs(c0[i] - c1[i]));
    char msg[80];
    std::snprintf(msg, sizeof msg, "kernels: avx2 matches scalar cmatmul (max deviation %.1e)", dev);
    report(dev < 1e-12, msg);
  } else {
    report(true, "kernels: avx2 unavailable, scalar only");
  }

  const RunConfig cfg = resolve(o);
  const RunConfig back = load_config(serialize_config(cfg));
  report(back == cfg && config_hash(back) == config_hash(cfg), "config: serialize/load round trip");

  for (ModelId id : all_models()) {
    const RoundTripStats s = round_trip(id, 10, derive_seed(cfg.detection.rng_seed, static_cast<std::uint64_t>(id)));
    report(s.recovered >= 9, "fit round trip " + std::string(to_string(id)) + ": " + std::to_string(s.recovered) +
                                 "/" + std::to_string(s.trials));
  }
  std::cout << fails << " checks failed\n";
  return fails ? failed : ok;
}

int error(const char* kind, const std::string& msg, int code) {
  std::cerr << "crspin: error: " << kind << ": " << msg << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crspin: spin ensemble simulation and fitting"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  auto add_seed = [&](CLI::App* s) {
    s->add_option("--seed", seed, "RNG seed (default: config value, or 1063110)");
  };
  auto add_format = [&](CLI::App* s) {
    s->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  };

  auto* sim = app.add_subcommand("simulate", "Run a protocol from a config file");
  sim->add_option("--config", o.config_path, "JSON config")->required();
  sim->add_option("--out", o.out, "Output path; a CSV also gets <out>.json")->required();
  sim->add_option("--protocol", o.protocol, "Override the configured protocol");
  add_seed(sim);
  add_format(sim);

  auto* fitc = app.add_subcommand("fit", "Fit a model to CSV data");
  fitc->add_option("input", o.input, "CSV with header; columns x, y[, sigma]")->required();
  fitc->add_option("--model", o.model, "Model id")->required();
  fitc->add_option("--out", o.out, "Report path (default stdout)");
  fitc->add_option("--config", o.config_path, "JSON config (echo convention, T1 model)");
  add_seed(fitc);
  add_format(fitc);
  o.format = "json";

  auto* suite = app.add_subcommand("paper-suite", "Run every acceptance criterion and tabulate");
  suite->add_option("--out", o.out, "Directory for paper_suite.csv / .json");
  add_seed(suite);
  add_format(suite);

  auto* self = app.add_subcommand("selftest", "Quick consistency checks");
  self->add_option("--config", o.config_path, "JSON config");
  add_seed(self);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return usage;
  }
  for (auto* s : {sim, fitc, suite, self})
    if (s->parsed() && s->count("--seed")) o.seed = seed;
  if (sim->parsed() && !sim->count("--format")) o.format = "csv";
  if (suite->parsed() && !suite->count("--format")) o.format = "csv";

  try {
    if (sim->parsed()) return simulate(o);
    if (fitc->parsed()) return fit_command(o);
    if (suite->parsed()) return paper_suite(o);
    return selftest(o);
  } catch (const ParseError& e) {
    return error("parse", e.what(), config);
  } catch (const ConfigError& e) {
    return error("config", e.what(), config);
  } catch (const IoError& e) {
    return error("io", e.what(), io);
  } catch (const DataError& e) {
    return error("data", e.what(), data);
  } catch (const DomainError& e) {
    return error("domain", e.what(), data);
  } catch (const FitError& e) {
    return error("fit", e.what(), data);
  } catch (const std::exception& e) {
    return error("internal", e.what(), failed);
  }
}
