#include "dwell/system_model.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "dwell/errors.hpp"
#include "dwell/json_io.hpp"

namespace dwell {

using json_io::json;

const Mat& Mode::A() const {
  if (vertices.size() != 1) throw InvalidInput("mode is polytopic; no single nominal A");
  return vertices.front();
}

Mat Mode::D_or_zero() const {
  if (D) return *D;
  return Mat::Zero(output_dim(), input_dim());
}

Mat Mode::F_or_zero() const {
  if (F) return *F;
  return Mat::Zero(output_dim(), disturbance_dim());
}

bool SwitchedSystem::is_nominal() const {
  return std::all_of(modes.begin(), modes.end(), [](const Mode& m) { return m.vertices.size() == 1; });
}

double SwitchedSystem::max_a_norm() const {
  double out = 0.0;
  for (const Mode& m : modes)
    for (const Mat& v : m.vertices) out = std::max(out, max_abs(v));
  return out;
}

void SwitchedSystem::validate() const {
  if (n < 1) throw ParseError("n: must be >= 1");
  if (modes.size() < 2) throw ParseError("modes: at least two modes are required");
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const Mode& m = modes[i];
    const std::string where = "modes[" + std::to_string(i) + "]";
    if (m.vertices.empty()) throw ParseError(where + ": no system matrix");
    for (std::size_t k = 0; k < m.vertices.size(); ++k) {
      const Mat& v = m.vertices[k];
      if (v.rows() != n || v.cols() != n) {
        throw DimensionMismatch(where + (m.polytopic ? ".vertices[" + std::to_string(k) + "]" : ".A") +
                                " must be " + std::to_string(n) + "x" + std::to_string(n));
      }
    }
    if (m.B && m.B->rows() != n) throw DimensionMismatch(where + ".B must have n rows");
    if (m.E && m.E->rows() != n) throw DimensionMismatch(where + ".E must have n rows");
    if (m.C && m.C->cols() != n) throw DimensionMismatch(where + ".C must have n columns");
    if (m.D) {
      if (!m.B || !m.C) throw DimensionMismatch(where + ".D requires B and C");
      if (m.D->rows() != m.C->rows() || m.D->cols() != m.B->cols()) {
        throw DimensionMismatch(where + ".D must be q_i x m_i");
      }
    }
    if (m.F) {
      if (!m.E || !m.C) throw DimensionMismatch(where + ".F requires E and C");
      if (m.F->rows() != m.C->rows() || m.F->cols() != m.E->cols()) {
        throw DimensionMismatch(where + ".F must be q_i x p_i");
      }
    }
  }
}

namespace {

SwitchedSystem from_json(const json& doc) {
  json_io::require_keys(doc, {"n", "modes", "preprocess"}, "system");
  if (!doc.contains("n") || !doc["n"].is_number_integer()) throw ParseError("n: expected an integer");
  if (!doc.contains("modes") || !doc["modes"].is_array()) throw ParseError("modes: expected an array");
  SwitchedSystem sys;
  sys.n = doc["n"].get<int>();

  std::optional<double> expm_period;
  if (doc.contains("preprocess")) {
    const json& pre = doc["preprocess"];
    json_io::require_keys(pre, {"type", "T"}, "preprocess");
    if (!pre.contains("type") || (pre["type"] != "expm" && pre["type"] != "exponential_discretization")) {
      throw ParseError("preprocess.type: only \"expm\" (alias \"exponential_discretization\") is supported");
    }
    if (!pre.contains("T") || !pre["T"].is_number()) throw ParseError("preprocess.T: expected a number");
    expm_period = pre["T"].get<double>();
    if (!(*expm_period > 0.0)) throw ParseError("preprocess.T: must be positive");
  }

  const json& modes = doc["modes"];
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::string where = "modes[" + std::to_string(i) + "]";
    const json& mj = modes[i];
    json_io::require_keys(mj, {"A", "vertices", "B", "E", "C", "D", "F"}, where);
    Mode mode;
    const bool has_a = mj.contains("A");
    const bool has_v = mj.contains("vertices");
    if (has_a == has_v) throw ParseError(where + ": exactly one of \"A\" or \"vertices\" is required");
    if (has_a) {
      mode.vertices.push_back(json_io::to_mat(mj["A"], where + ".A"));
    } else {
      const json& vj = mj["vertices"];
      if (!vj.is_array() || vj.empty()) throw ParseError(where + ".vertices: expected a non-empty array");
      for (std::size_t k = 0; k < vj.size(); ++k) {
        mode.vertices.push_back(json_io::to_mat(vj[k], where + ".vertices[" + std::to_string(k) + "]"));
      }
      mode.polytopic = true;
    }
    auto opt = [&](const char* key) -> std::optional<Mat> {
      if (!mj.contains(key)) return std::nullopt;
      return json_io::to_mat(mj[key], where + "." + key);
    };
    mode.B = opt("B");
    mode.E = opt("E");
    mode.C = opt("C");
    mode.D = opt("D");
    mode.F = opt("F");
    sys.modes.push_back(std::move(mode));
  }
  sys.validate();
  if (expm_period) {
    for (Mode& m : sys.modes)
      for (Mat& v : m.vertices) v = expm(v * *expm_period);
  }
  return sys;
}

}  // namespace

SwitchedSystem parse_system(const std::string& json_text) {
  return from_json(json_io::parse_text(json_text, "system"));
}

SwitchedSystem load_system(const std::filesystem::path& path) {
  const std::string text = json_io::read_file(path.string());
  try {
    return from_json(json_io::parse_text(text, path.string()));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const DimensionMismatch& e) {
    throw DimensionMismatch(path.string() + ": " + e.what());
  }
}

std::string dump_system(const SwitchedSystem& sys) {
  json doc;
  doc["n"] = sys.n;
  doc["modes"] = json::array();
  for (const Mode& m : sys.modes) {
    json mj = json::object();
    if (m.polytopic) {
      mj["vertices"] = json::array();
      for (const Mat& v : m.vertices) mj["vertices"].push_back(json_io::from_mat(v));
    } else {
      mj["A"] = json_io::from_mat(m.vertices.front());
    }
    if (m.B) mj["B"] = json_io::from_mat(*m.B);
    if (m.E) mj["E"] = json_io::from_mat(*m.E);
    if (m.C) mj["C"] = json_io::from_mat(*m.C);
    if (m.D) mj["D"] = json_io::from_mat(*m.D);
    if (m.F) mj["F"] = json_io::from_mat(*m.F);
    doc["modes"].push_back(std::move(mj));
  }
  return doc.dump(2);
}

void save_system(const SwitchedSystem& sys, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput(path.string() + ": cannot write");
  out << dump_system(sys) << "\n";
}

int SwitchingSignal::mode_at(int t) const {
  auto it = std::upper_bound(instants.begin(), instants.end(), t);
  if (it == instants.begin()) throw InvalidInput("mode_at: time before the first instant");
  return modes[static_cast<std::size_t>(std::distance(instants.begin(), it) - 1)];
}

int SwitchingSignal::steps_since_switch(int t) const {
  auto it = std::upper_bound(instants.begin(), instants.end(), t);
  if (it == instants.begin()) throw InvalidInput("steps_since_switch: time before the first instant");
  return t - *(it - 1);
}

std::vector<int> SwitchingSignal::dwell_times() const {
  std::vector<int> out;
  for (std::size_t q = 0; q + 1 < instants.size(); ++q) out.push_back(instants[q + 1] - instants[q]);
  return out;
}

void SwitchingSignal::validate(int num_modes) const {
  if (instants.size() != modes.size()) throw InvalidInput("signal: instants and modes differ in length");
  if (instants.empty()) return;
  if (instants.front() != 0) throw InvalidInput("signal: first instant must be 0");
  for (std::size_t q = 0; q < instants.size(); ++q) {
    if (modes[q] < 0 || modes[q] >= num_modes) throw InvalidInput("signal: mode index out of range");
    if (q > 0) {
      if (instants[q] <= instants[q - 1]) throw InvalidInput("signal: instants must increase strictly");
      if (modes[q] == modes[q - 1]) throw InvalidInput("signal: consecutive segments share a mode");
    }
  }
}

SwitchingSignal random_signal(DwellSpec spec, int horizon, std::uint64_t seed, int num_modes) {
  if (spec.tau < 1) throw InvalidInput("random_signal: tau must be >= 1");
  if (num_modes < 2) throw InvalidInput("random_signal: at least two modes are required");
  if (horizon < 0) throw InvalidInput("random_signal: negative horizon");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dwell(spec.tau, 3 * spec.tau);
  std::uniform_int_distribution<int> first(0, num_modes - 1);
  std::uniform_int_distribution<int> other(0, num_modes - 2);
  SwitchingSignal sig;
  sig.horizon = horizon;
  int t = 0;
  int mode = first(rng);
  do {
    sig.instants.push_back(t);
    sig.modes.push_back(mode);
    t += dwell(rng);
    const int next = other(rng);
    mode = next >= mode ? next + 1 : next;
  } while (t < horizon);
  return sig;
}

SwitchingSignal periodic_signal(const std::vector<int>& cycle, int dwell, int horizon) {
  if (cycle.empty() || dwell < 1) throw InvalidInput("periodic_signal: empty cycle or dwell < 1");
  SwitchingSignal sig;
  sig.horizon = horizon;
  int t = 0;
  std::size_t idx = 0;
  do {
    sig.instants.push_back(t);
    sig.modes.push_back(cycle[idx % cycle.size()]);
    ++idx;
    t += dwell;
  } while (t < horizon);
  return sig;
}

}  // namespace dwell
