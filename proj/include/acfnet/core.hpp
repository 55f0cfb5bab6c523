#ifndef ACFNET_CORE_HPP
#define ACFNET_CORE_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace acfnet {

// Error hierarchy. Every failure surfaced by the library derives from Error so
// callers can catch one type at the boundary (the CLI does exactly that).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RangeError : Error { using Error::Error; };
struct MissingDataError : Error { using Error::Error; };
struct InfeasibleSplitError : Error { using Error::Error; };
struct DegenerateClassError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct TooShortError : Error { using Error::Error; };
struct AlignmentError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct DelayRangeError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct TrainingError : Error { using Error::Error; };
struct UndefinedMetricError : Error { using Error::Error; };
struct LeakageError : Error { using Error::Error; };

enum class Label : std::uint8_t { NonDepressed = 0, Depressed = 1 };

inline double label_value(Label l) { return l == Label::Depressed ? 1.0 : 0.0; }
inline const char* to_string(Label l) {
  return l == Label::Depressed ? "depressed" : "nondepressed";
}
Label label_from_string(const std::string& s);

// splitmix64 finalizer; used to derive independent sub-seeds from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr const char* kVersion = "0.1.0";

}  // namespace acfnet

#endif  // ACFNET_CORE_HPP
