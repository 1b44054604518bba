#ifndef ANNOT_CLI_HPP
#define ANNOT_CLI_HPP

namespace annot::cli {

// Exit codes: 0 success; 2 config/usage; 3 data or I/O; 4 provider-fatal;
// 5 gate refusal; 1 anything else.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitProviderFatal = 4;
inline constexpr int kExitGateRefusal = 5;

int run(int argc, const char* const* argv);

}  // namespace annot::cli

#endif  // ANNOT_CLI_HPP
