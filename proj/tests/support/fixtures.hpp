#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "evf/prompting.hpp"

namespace evf::oracle {

/// A hand-built forecast prompt input and the golden file it must render to.
struct PromptFixture {
    std::string golden;
    QuerySpec query;
    HistoryBundle bundle;
};

std::vector<PromptFixture> prompt_fixtures();

struct ParserCase {
    const char* raw;
    char expected;  // 0: unparseable
};

/// Options the parser corpus is scored against.
OptionSet parser_options();
const std::vector<ParserCase>& parser_cases();

std::string read_golden(const std::filesystem::path& dir, const std::string& name);

}  // namespace evf::oracle
