#pragma once

#include <iosfwd>

namespace facechannel {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point for the `facechannel` command. Subcommands: synth, train,
/// finetune, eval, params, gradcam. Returns 0 on success, 1 on runtime
/// failures (I/O, corrupt checkpoints, undecodable images) and 2 on bad flags
/// or inputs that do not fit together.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace facechannel
