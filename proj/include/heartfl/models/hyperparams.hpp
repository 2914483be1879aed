#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "heartfl/error.hpp"

namespace heartfl {

enum class Family : std::uint8_t { kLR, kNN1, kSVM, kNB, kDT, kRF, kKNN };

inline constexpr std::array<Family, 7> kAllFamilies = {
    Family::kLR, Family::kNN1, Family::kSVM, Family::kNB, Family::kDT, Family::kRF, Family::kKNN};

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::kLR: return "LR";
    case Family::kNN1: return "NN1";
    case Family::kSVM: return "SVM";
    case Family::kNB: return "NB";
    case Family::kDT: return "DT";
    case Family::kRF: return "RF";
    case Family::kKNN: return "KNN";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  for (Family f : kAllFamilies)
    if (s == family_name(f)) return f;
  if (s == "1LNN" || s == "NN") return Family::kNN1;
  throw ConfigError("unknown model family '" + std::string(s) + "'");
}

// Families trained by gradient steps on a flat parameter vector.
inline bool is_differentiable(Family f) {
  return f == Family::kLR || f == Family::kNN1 || f == Family::kSVM;
}

struct Hyperparams {
  Family family = Family::kLR;
  double learning_rate = 0.01;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::size_t hidden_units = 8;           // NN1
  double c = 1.0;                         // SVM
  double alpha = 1.0;                     // NB Laplace smoothing
  std::optional<std::size_t> max_depth;   // DT; nullopt grows until pure
  std::size_t n_estimators = 100;         // RF
  std::size_t k = 5;                      // KNN

  bool operator==(const Hyperparams&) const = default;
};

// Compact "key=value" rendering of the fields that matter for the family.
inline std::string describe(const Hyperparams& hp) {
  std::ostringstream os;
  os << family_name(hp.family);
  if (is_differentiable(hp.family))
    os << " lr=" << hp.learning_rate << " batch=" << hp.batch_size << " epochs=" << hp.epochs;
  switch (hp.family) {
    case Family::kNN1: os << " hidden=" << hp.hidden_units; break;
    case Family::kSVM: os << " C=" << hp.c; break;
    case Family::kNB: os << " alpha=" << hp.alpha; break;
    case Family::kDT:
      os << " max_depth=" << (hp.max_depth ? std::to_string(*hp.max_depth) : "none");
      break;
    case Family::kRF: os << " n_estimators=" << hp.n_estimators; break;
    case Family::kKNN: os << " k=" << hp.k; break;
    default: break;
  }
  return os.str();
}

}  // namespace heartfl
