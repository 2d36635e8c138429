#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "pcscopf/network.hpp"

namespace pcscopf {

enum class CaseFormat { matpower_subset, native_json };

/// Parse failure with the location that caused it. `line` is 1-based and 0
/// when the error is not tied to a line (JSON field errors carry the path
/// in `field`).
class CaseParseError : public std::runtime_error {
 public:
  CaseParseError(const std::string& source, int line, std::string field,
                 const std::string& what);
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

struct LoadOptions {
  ReliabilityDefaults defaults;
  /// Piecewise segments used to linearize quadratic (model 2) gencost rows.
  int quadratic_segments = 3;
  /// Explicit side files; when unset, `<stem>.reliability.csv` and
  /// `<stem>.voll.csv` next to the case are picked up if present.
  std::optional<std::filesystem::path> reliability_csv;
  std::optional<std::filesystem::path> voll_csv;
  bool use_companion_files = true;
};

Network load_case(const std::filesystem::path& path, CaseFormat format,
                  const LoadOptions& options = {});

/// Picks the format from the extension: `.json` is native, anything else
/// is treated as MATPOWER text.
Network load_case(const std::filesystem::path& path, const LoadOptions& options = {});

Network parse_matpower(std::istream& in, const LoadOptions& options = {},
                       const std::string& source = "<stream>");

Network parse_native_json(std::istream& in, const std::string& source = "<stream>");
void write_native_json(const Network& network, std::ostream& out);
void write_native_json(const Network& network, const std::filesystem::path& path);

/// Overrides per-branch pi and emergency ratings from a
/// `branch_id,pi,limit_short_mw,limit_long_mw` CSV.
void apply_reliability_csv(Network& network, std::istream& in,
                           const std::string& source = "<stream>");
/// Overrides demand VOLL from a `demand_id,voll` CSV.
void apply_voll_csv(Network& network, std::istream& in,
                    const std::string& source = "<stream>");

void write_reliability_csv(const Network& network, std::ostream& out);
void write_voll_csv(const Network& network, std::ostream& out);

inline constexpr int kNativeJsonVersion = 1;

}  // namespace pcscopf
