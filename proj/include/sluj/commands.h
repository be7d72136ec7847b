#ifndef SLUJ_COMMANDS_H_
#define SLUJ_COMMANDS_H_

#include <iosfwd>

namespace sluj {

// The `sluj` command line: train, eval, tag, synth and serve. Returns the
// process exit code (0 on success, 2 for usage errors, 1 otherwise). With
// --json, results are JSON lines on `out` and errors a JSON object on `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace sluj

#endif  // SLUJ_COMMANDS_H_
