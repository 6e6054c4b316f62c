#pragma once

// 2000-bit evaluation of x0 + sum_k c_k e^(e^k) with MPFR.

#include <mpfr.h>

#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "rdsline/monster.hpp"

namespace oracle {

class TowerOracle {
 public:
  static constexpr mpfr_prec_t kBits = 2000;

  /// Ranks up to 42: e^(e^k) needs about 1.44 e^k exponent bits.
  explicit TowerOracle(std::uint64_t max_rank) {
    mpfr_set_emax(mpfr_get_emax_max());
    if (max_rank > 42) throw std::out_of_range("tower oracle supports ranks <= 42");
    tower_.resize(max_rank + 1);
    for (std::uint64_t k = 1; k <= max_rank; ++k) {
      mpfr_ptr t = &tower_[k];
      mpfr_init2(t, kBits);
      mpfr_set_ui(t, static_cast<unsigned long>(k), MPFR_RNDN);
      mpfr_exp(t, t, MPFR_RNDN);
      mpfr_exp(t, t, MPFR_RNDN);
    }
    mpfr_inits2(kBits, acc_, term_, bound_, static_cast<mpfr_ptr>(nullptr));
  }

  ~TowerOracle() {
    for (std::size_t k = 1; k < tower_.size(); ++k) mpfr_clear(&tower_[k]);
    mpfr_clears(acc_, term_, bound_, static_cast<mpfr_ptr>(nullptr));
  }

  TowerOracle(const TowerOracle&) = delete;
  TowerOracle& operator=(const TowerOracle&) = delete;

  double tower(std::uint64_t k) { return mpfr_get_d(&tower_[k], MPFR_RNDN); }

  rdsline::Position classify(const rdsline::RankState& s, double a, double b) {
    mpfr_set_d(acc_, s.x0, MPFR_RNDN);
    for (int k = 1; k <= rdsline::kDenseRanks; ++k) add(static_cast<std::uint64_t>(k), s.low[k]);
    for (const auto& [k, c] : s.high) add(k, c);
    mpfr_set_d(bound_, a, MPFR_RNDN);
    if (mpfr_less_p(acc_, bound_)) return rdsline::Position::Below;
    mpfr_set_d(bound_, b, MPFR_RNDN);
    if (mpfr_greater_p(acc_, bound_)) return rdsline::Position::Above;
    return rdsline::Position::Inside;
  }

 private:
  void add(std::uint64_t k, std::int64_t c) {
    if (c == 0) return;
    mpfr_mul_si(term_, &tower_.at(k), static_cast<long>(c), MPFR_RNDN);
    mpfr_add(acc_, acc_, term_, MPFR_RNDN);
  }

  std::vector<__mpfr_struct> tower_;
  mpfr_t acc_, term_, bound_;
};

}  // namespace oracle
