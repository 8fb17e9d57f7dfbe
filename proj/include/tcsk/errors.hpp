#pragma once

#include <stdexcept>
#include <string>

namespace tcsk {

/** Base class for all library errors. */
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/** Violated call contract: bad sizes, out-of-range parameters, malformed schedules. */
struct precondition_error : error {
  using error::error;
};

/** Fields or states living on different grids were combined. */
struct grid_mismatch_error : error {
  using error::error;
};

/** A potential left the positivity cone (smallest metric eigenvalue <= delta_pos). */
struct invalid_metric_error : error {
  using error::error;
};

/** Iteration budget (Newton or flow steps) exhausted before the tolerance. */
struct max_iterations_error : error {
  using error::error;
};

/** Krylov inner solve failed to make progress within its budget. */
struct krylov_error : error {
  using error::error;
};

/** Configuration document rejected; the message carries the offending key path. */
struct config_error : error {
  using error::error;
};

/** Filesystem or serialization failure. */
struct io_error : error {
  using error::error;
};

} // namespace tcsk
