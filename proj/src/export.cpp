#include "rh/harness.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace rh::harness {

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

nlohmann::json to_json(const VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

VectorXd vector_from_json(const nlohmann::json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"' && quoted && i + 1 < line.size() && line[i + 1] == '"') {
      field.push_back('"');  // "" inside a quoted field
      ++i;
    } else if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      fields.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  return fields;
}

}  // namespace

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << metrics_header << '\n';
  for (const auto& r : rows) {
    std::string error;
    for (char c : r.error.value_or("")) {
      if (c == '"') error.push_back('"');
      error.push_back(c == '\n' ? ' ' : c);
    }
    os << r.seed << ',' << to_string(r.agent) << ',' << r.samples << ',' << format_double(r.realized_return) << ','
       << format_double(r.oracle_value) << ',' << format_double(r.suboptimality) << ',' << (r.collision ? 1 : 0) << ','
       << format_double(r.wall_ms) << ',' << '"' << error << '"' << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != metrics_header) throw ConfigError("metrics CSV: unexpected header");
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw ConfigError("metrics CSV: expected 9 fields, got " + std::to_string(f.size()));
    MetricsRow r;
    r.seed = std::stoull(f[0]);
    r.agent = parse_agent(f[1]);
    r.samples = std::stoull(f[2]);
    r.realized_return = std::stod(f[3]);
    r.oracle_value = std::stod(f[4]);
    r.suboptimality = std::stod(f[5]);
    r.collision = f[6] == "1";
    r.wall_ms = std::stod(f[7]);
    if (!f[8].empty()) r.error = f[8];
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_suboptimality_csv(std::ostream& os, const std::vector<SuboptimalityPoint>& series) {
  os << "samples,episodes,mean,ci_low,ci_high,max\n";
  for (const auto& p : series)
    os << p.samples << ',' << p.episodes << ',' << format_double(p.mean) << ',' << format_double(p.ci_low) << ','
       << format_double(p.ci_high) << ',' << format_double(p.max) << '\n';
}

void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows) {
  const Eigen::Index p = rows.empty() ? 0 : rows.front().simple.size();
  os << "t";
  for (Eigen::Index i = 0; i < p; ++i)
    os << ",simple_lower_" << i << ",simple_upper_" << i << ",enhanced_lower_" << i << ",enhanced_upper_" << i;
  os << '\n';
  for (const auto& r : rows) {
    os << format_double(r.t);
    for (Eigen::Index i = 0; i < p; ++i)
      os << ',' << format_double(r.simple.lower(i)) << ',' << format_double(r.simple.upper(i)) << ','
         << format_double(r.enhanced.lower(i)) << ',' << format_double(r.enhanced.upper(i));
    os << '\n';
  }
}

nlohmann::json trace_to_json(const EpisodeTrace& trace, bool include_timing) {
  nlohmann::json j;
  j["schema"] = trace_schema;
  j["environment"] = trace.environment;
  j["agent"] = to_string(trace.agent);
  j["seed"] = trace.seed;
  j["warm_samples"] = trace.warm_samples;
  j["discounted_return"] = trace.discounted_return;
  j["collided"] = trace.collided;
  j["surviving"] = trace.surviving;
  j["error"] = trace.error ? nlohmann::json(*trace.error) : nlohmann::json(nullptr);
  j["rejections"] = nlohmann::json::array();
  for (const auto& r : trace.rejections) j["rejections"].push_back({{"step", r.step}, {"candidate", r.candidate}});
  j["steps"] = nlohmann::json::array();
  for (const auto& s : trace.steps) {
    nlohmann::json js{{"t", s.t},
                      {"x", to_json(s.x)},
                      {"u", to_json(s.u)},
                      {"y", to_json(s.y)},
                      {"action", s.action},
                      {"reward", s.reward},
                      {"predicted_lower", to_json(s.predicted_lower)},
                      {"predicted_upper", to_json(s.predicted_upper)},
                      {"min_planned_reward", s.min_planned_reward},
                      {"collision", s.collision},
                      {"models", s.models}};
    if (include_timing) js["wall_ms"] = s.wall_ms;
    j["steps"].push_back(std::move(js));
  }
  return j;
}

EpisodeTrace trace_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != trace_schema) throw ConfigError("trace JSON: unsupported schema");
  EpisodeTrace t;
  t.environment = j.at("environment").get<std::string>();
  t.agent = parse_agent(j.at("agent").get<std::string>());
  t.seed = j.at("seed").get<std::uint64_t>();
  t.warm_samples = j.at("warm_samples").get<std::size_t>();
  t.discounted_return = j.at("discounted_return").get<double>();
  t.collided = j.at("collided").get<bool>();
  t.surviving = j.at("surviving").get<std::vector<std::size_t>>();
  if (!j.at("error").is_null()) t.error = j["error"].get<std::string>();
  for (const auto& r : j.at("rejections")) t.rejections.push_back({r.at("step").get<std::size_t>(), r.at("candidate").get<std::size_t>()});
  for (const auto& js : j.at("steps")) {
    StepRecord s;
    s.t = js.at("t").get<double>();
    s.x = vector_from_json(js.at("x"));
    s.u = vector_from_json(js.at("u"));
    s.y = vector_from_json(js.at("y"));
    s.action = js.at("action").get<std::size_t>();
    s.reward = js.at("reward").get<double>();
    s.predicted_lower = vector_from_json(js.at("predicted_lower"));
    s.predicted_upper = vector_from_json(js.at("predicted_upper"));
    s.min_planned_reward = js.at("min_planned_reward").get<double>();
    s.collision = js.at("collision").get<bool>();
    s.models = js.at("models").get<std::size_t>();
    s.wall_ms = js.value("wall_ms", 0.0);
    t.steps.push_back(std::move(s));
  }
  return t;
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer) {
  std::ofstream out;
  out.exceptions(std::ios::failbit | std::ios::badbit);
  out.open(path);
  writer(out);
  out.flush();
}

}  // namespace rh::harness
