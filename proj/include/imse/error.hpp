#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace imse {

enum class errc {
    non_finite_input = 1,
    degenerate_range,
    out_of_range,
    shape_mismatch,
    bad_range,
    invalid_spec,
    bad_config,
    empty_dataset,
    diverged_training,
    non_finite_loss,
    both_empty,
    empty_mask,
    empty_region,
    degenerate_scores,
    io,
};

inline std::string_view to_string(errc code) {
    switch (code) {
        case errc::non_finite_input: return "NonFiniteInput";
        case errc::degenerate_range: return "DegenerateRange";
        case errc::out_of_range: return "OutOfRange";
        case errc::shape_mismatch: return "ShapeMismatch";
        case errc::bad_range: return "BadRange";
        case errc::invalid_spec: return "InvalidSpec";
        case errc::bad_config: return "BadConfig";
        case errc::empty_dataset: return "EmptyDataset";
        case errc::diverged_training: return "DivergedTraining";
        case errc::non_finite_loss: return "NonFiniteLoss";
        case errc::both_empty: return "BothEmpty";
        case errc::empty_mask: return "EmptyMask";
        case errc::empty_region: return "EmptyRegion";
        case errc::degenerate_scores: return "DegenerateScores";
        case errc::io: return "IoError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the `errc` kinds so
/// callers (and the CLI's exit-code mapping) can branch on it.
class error : public std::runtime_error {
  public:
    error(errc code, const std::string &what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    errc code() const noexcept { return code_; }

  private:
    errc code_;
};

/// Distinct process exit status per error kind; 0 is success, 1 is reserved
/// for unexpected exceptions.
inline int exit_code(errc code) { return 10 + static_cast<int>(code); }

namespace detail {
inline void require(bool cond, errc code, const std::string &what) {
    if (!cond) throw error(code, what);
}
} // namespace detail

} // namespace imse
