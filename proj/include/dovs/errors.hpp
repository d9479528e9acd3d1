#pragma once

#include <stdexcept>

namespace dovs {

// Contract violations (caller bugs).
struct ZeroDistance : std::invalid_argument { using std::invalid_argument::invalid_argument; };
struct InvalidAction : std::logic_error { using std::logic_error::logic_error; };
struct EmptyMask : std::logic_error { using std::logic_error::logic_error; };
struct CommandOutOfEnvelope : std::logic_error { using std::logic_error::logic_error; };
struct NonConsecutive : std::invalid_argument { using std::invalid_argument::invalid_argument; };
struct ShapeMismatch : std::invalid_argument { using std::invalid_argument::invalid_argument; };
struct EmptyStore : std::logic_error { using std::logic_error::logic_error; };
struct WarmupNotReached : std::logic_error { using std::logic_error::logic_error; };

// Environment / data failures.
struct SpawnFailure : std::runtime_error { using std::runtime_error::runtime_error; };
struct VersionMismatch : std::runtime_error { using std::runtime_error::runtime_error; };
struct ChecksumMismatch : std::runtime_error { using std::runtime_error::runtime_error; };
struct MalformedTrace : std::runtime_error { using std::runtime_error::runtime_error; };

}  // namespace dovs
