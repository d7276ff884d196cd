#pragma once

namespace facelab {

// Entry point of the facelab tool. Returns 0 on success; on failure prints a
// single-line diagnostic to stderr and returns nonzero (1 for runtime
// errors, 2 for usage errors).
int parse_and_dispatch(int argc, const char* const* argv);

}  // namespace facelab
