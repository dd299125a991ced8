#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dwell/matrix_core.hpp"

namespace dwell {

/// One subsystem. A nominal mode is stored as a one-vertex polytope so the
/// robust code paths cover it; `polytopic` records how it was declared.
struct Mode {
  std::vector<Mat> vertices;
  bool polytopic = false;
  std::optional<Mat> B, E, C, D, F;

  /// Nominal matrix. Throws InvalidInput for a polytopic mode with more than
  /// one vertex.
  const Mat& A() const;
  int num_vertices() const { return static_cast<int>(vertices.size()); }

  int input_dim() const { return B ? static_cast<int>(B->cols()) : 0; }        // m_i
  int disturbance_dim() const { return E ? static_cast<int>(E->cols()) : 0; }  // p_i
  int output_dim() const { return C ? static_cast<int>(C->rows()) : 0; }       // q_i

  /// D_i and F_i with the zero default of the right shape.
  Mat D_or_zero() const;
  Mat F_or_zero() const;
};

struct SwitchedSystem {
  int n = 0;
  std::vector<Mode> modes;

  int num_modes() const { return static_cast<int>(modes.size()); }
  bool is_nominal() const;
  /// max over modes and vertices of max|A|.
  double max_a_norm() const;
  /// Checks every invariant; throws DimensionMismatch / ParseError.
  void validate() const;
};

/// Piecewise-constant switching signal over a finite horizon. Segment q
/// starts at instants[q] and runs in mode modes[q] (0-based) until the next
/// instant or the horizon.
struct SwitchingSignal {
  std::vector<int> instants;
  std::vector<int> modes;
  int horizon = 0;

  int mode_at(int t) const;
  /// Steps elapsed since the most recent switching instant at or before t.
  int steps_since_switch(int t) const;
  /// Lengths of the completed segments (the last one runs into the horizon).
  std::vector<int> dwell_times() const;
  /// Throws InvalidInput on a broken invariant.
  void validate(int num_modes) const;
};

struct DwellSpec {
  int tau = 1;
};

/// Reads and validates a system file. Throws ParseError with the field path
/// on schema violations and DimensionMismatch naming the offending matrix.
SwitchedSystem load_system(const std::filesystem::path& path);
SwitchedSystem parse_system(const std::string& json_text);
std::string dump_system(const SwitchedSystem& sys);
void save_system(const SwitchedSystem& sys, const std::filesystem::path& path);

/// Deterministic random dwell-admissible signal: every completed dwell lies
/// in [tau, 3 tau], consecutive modes differ.
SwitchingSignal random_signal(DwellSpec spec, int horizon, std::uint64_t seed, int num_modes);

/// Periodic signal that visits the given modes in order with a fixed dwell.
SwitchingSignal periodic_signal(const std::vector<int>& cycle, int dwell, int horizon);

}  // namespace dwell
