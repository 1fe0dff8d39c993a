#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "dmlshift/errors.h"
#include "dmlshift/harness.h"
#include "numfmt.h"

namespace dmlshift {

const char* const kRecordsHeader =
    "spec_id,rep_id,epoch,estimator,theta_hat,plug_in,correction,v_hat,ci_low,ci_high,"
    "truth_theta,truth_mc_se,failed,wall_time_ms";

const std::vector<std::string> kAggregateKeys{"estimator",   "epoch",        "rms_bias",
                                              "rms_bias_se", "avg_rmse",     "avg_rmse_se",
                                              "coverage_rate", "n_records", "n_specs",
                                              "n_failed"};

namespace {

using detail::format_double;

std::string csv_double(double v) { return std::isnan(v) ? std::string("nan") : format_double(v); }

double parse_double(const std::string& field, const std::string& context) {
  if (field == "nan" || field == "NaN") return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (field.empty() || end != field.c_str() + field.size()) {
    throw IoError(context + ": not a number '" + field + "'");
  }
  return v;
}

long parse_int(const std::string& field, const std::string& context) {
  char* end = nullptr;
  const long v = std::strtol(field.c_str(), &end, 10);
  if (field.empty() || end != field.c_str() + field.size()) {
    throw IoError(context + ": not an integer '" + field + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace

std::string format_record_csv_line(const ReplicationRecord& r) {
  std::string s = std::to_string(r.spec_id) + ',' + std::to_string(r.rep_id) + ',' +
                  std::to_string(r.epoch) + ',' + r.estimator;
  for (double v : {r.theta_hat, r.plug_in, r.correction, r.v_hat, r.ci_low, r.ci_high,
                   r.truth_theta, r.truth_mc_se}) {
    s += ',' + csv_double(v);
  }
  s += r.failed ? ",1," : ",0,";
  s += csv_double(r.wall_time_ms);
  return s;
}

void write_records_csv(const std::string& path, const std::vector<ReplicationRecord>& records) {
  std::string text = std::string(kRecordsHeader) + '\n';
  for (const auto& r : records) text += format_record_csv_line(r) + '\n';
  write_text(path, text);
}

std::vector<ReplicationRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::string line;
  std::vector<ReplicationRecord> out;
  if (!std::getline(in, line)) return out;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordsHeader) throw IoError(path + ": unexpected records header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string ctx = path + ":" + std::to_string(line_no);
    const auto f = split(line);
    if (f.size() != 14) throw IoError(ctx + ": expected 14 fields, found " + std::to_string(f.size()));
    ReplicationRecord r;
    r.spec_id = static_cast<int>(parse_int(f[0], ctx));
    r.rep_id = static_cast<int>(parse_int(f[1], ctx));
    r.epoch = static_cast<int>(parse_int(f[2], ctx));
    r.estimator = f[3];
    r.theta_hat = parse_double(f[4], ctx);
    r.plug_in = parse_double(f[5], ctx);
    r.correction = parse_double(f[6], ctx);
    r.v_hat = parse_double(f[7], ctx);
    r.ci_low = parse_double(f[8], ctx);
    r.ci_high = parse_double(f[9], ctx);
    r.truth_theta = parse_double(f[10], ctx);
    r.truth_mc_se = parse_double(f[11], ctx);
    const long failed = parse_int(f[12], ctx);
    if (failed != 0 && failed != 1) throw IoError(ctx + ": failed must be 0 or 1");
    r.failed = failed == 1;
    r.wall_time_ms = parse_double(f[13], ctx);
    out.push_back(std::move(r));
  }
  return out;
}

std::string aggregate_to_json(const std::vector<AggregateRow>& rows) {
  using detail::json_number;
  std::string s = "[";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    s += i ? ",\n  {" : "\n  {";
    s += "\"estimator\": " + nlohmann::json(r.estimator).dump();
    s += ", \"epoch\": " + std::to_string(r.epoch);
    s += ", \"rms_bias\": " + json_number(r.rms_bias);
    s += ", \"rms_bias_se\": " + json_number(r.rms_bias_se);
    s += ", \"avg_rmse\": " + json_number(r.avg_rmse);
    s += ", \"avg_rmse_se\": " + json_number(r.avg_rmse_se);
    s += ", \"coverage_rate\": " + json_number(r.coverage_rate);
    s += ", \"n_records\": " + std::to_string(r.n_records);
    s += ", \"n_specs\": " + std::to_string(r.n_specs);
    s += ", \"n_failed\": " + std::to_string(r.n_failed);
    s += "}";
  }
  s += rows.empty() ? "]\n" : "\n]\n";
  return s;
}

std::vector<AggregateRow> aggregate_from_json(const std::string& text) {
  auto num = [](const nlohmann::json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  std::vector<AggregateRow> rows;
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_array()) throw IoError("aggregate JSON must be an array");
    for (const auto& o : j) {
      AggregateRow r;
      r.estimator = o.at("estimator").get<std::string>();
      r.epoch = o.at("epoch").get<int>();
      r.rms_bias = num(o.at("rms_bias"));
      r.rms_bias_se = num(o.at("rms_bias_se"));
      r.avg_rmse = num(o.at("avg_rmse"));
      r.avg_rmse_se = num(o.at("avg_rmse_se"));
      r.coverage_rate = num(o.at("coverage_rate"));
      r.n_records = o.at("n_records").get<Index>();
      r.n_specs = o.at("n_specs").get<Index>();
      r.n_failed = o.at("n_failed").get<Index>();
      rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("aggregate JSON: ") + e.what());
  }
  return rows;
}

void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows) {
  std::string text;
  for (std::size_t k = 0; k < kAggregateKeys.size(); ++k) text += (k ? "," : "") + kAggregateKeys[k];
  text += '\n';
  for (const auto& r : rows) {
    text += r.estimator + ',' + std::to_string(r.epoch) + ',' + csv_double(r.rms_bias) + ',' +
            csv_double(r.rms_bias_se) + ',' + csv_double(r.avg_rmse) + ',' +
            csv_double(r.avg_rmse_se) + ',' + csv_double(r.coverage_rate) + ',' +
            std::to_string(r.n_records) + ',' + std::to_string(r.n_specs) + ',' +
            std::to_string(r.n_failed) + '\n';
  }
  write_text(path, text);
}

void emit_outputs(const std::vector<AggregateRow>& rows,
                  const std::vector<ReplicationRecord>& records, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir + "': " + ec.message());
  const std::filesystem::path dir(out_dir);
  write_records_csv((dir / "records.csv").string(), records);
  write_aggregate_csv((dir / "aggregate.csv").string(), rows);
  write_text((dir / "aggregate.json").string(), aggregate_to_json(rows));

  std::string fig = "estimator,epoch,rms_bias,rms_bias_se,avg_rmse,avg_rmse_se\n";
  for (const auto& r : rows) {
    fig += r.estimator + ',' + std::to_string(r.epoch) + ',' + csv_double(r.rms_bias) + ',' +
           csv_double(r.rms_bias_se) + ',' + csv_double(r.avg_rmse) + ',' +
           csv_double(r.avg_rmse_se) + '\n';
  }
  write_text((dir / "plot_data.csv").string(), fig);
}

std::string format_report(const std::vector<AggregateRow>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %6s %22s %22s %9s %8s %6s\n", "estimator", "epoch",
                "rms_bias (se)", "avg_rmse (se)", "coverage", "records", "failed");
  out += buf;
  for (const auto& r : rows) {
    char bias[48], rmse[48];
    std::snprintf(bias, sizeof bias, "%.5f (%.5f)", r.rms_bias, r.rms_bias_se);
    std::snprintf(rmse, sizeof rmse, "%.5f (%.5f)", r.avg_rmse, r.avg_rmse_se);
    std::snprintf(buf, sizeof buf, "%-14s %6d %22s %22s %9.3f %8ld %6ld\n", r.estimator.c_str(),
                  r.epoch, bias, rmse, r.coverage_rate, static_cast<long>(r.n_records),
                  static_cast<long>(r.n_failed));
    out += buf;
  }
  return out;
}

}  // namespace dmlshift
