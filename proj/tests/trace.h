#ifndef SLUJ_TESTS_TRACE_H_
#define SLUJ_TESTS_TRACE_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sluj/service.h"

namespace sluj::testing {

// Scripted ten-turn shopping dialog that reaches every tracker branch.
extern const std::vector<std::string> kShoppingScript;
inline constexpr uint64_t kTraceSeed = 12;

// Rule-NLU service over the shipped data with counter ids and a fixed clock.
ChatService::Options fixed_options();

// Runs the script on a fresh service; `transcript` may be empty.
nlohmann::json run_shopping_trace(const std::filesystem::path& transcript = {});

// Agent actions expected for the script, with the two-way random branches
// replayed on a bare std::mt19937_64 seeded like the session.
std::vector<std::string> expected_trace_actions(uint64_t seed);

std::filesystem::path trace_fixture();

}  // namespace sluj::testing

#endif  // SLUJ_TESTS_TRACE_H_
