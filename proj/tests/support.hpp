#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "qda/core_model.hpp"
#include "qda/text.hpp"

namespace qda::testing {

inline const char* const kCatCorpus = "the cat sat on the mat. the cat ran.";

inline Document doc_from(std::string_view raw, SegmentationPolicy policy = {}) {
    std::string text = text::normalize(raw);
    auto segs = segment_document(text, policy);
    return make_document(std::move(text), InlineText{std::string(raw)}, std::move(segs));
}

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(QDA_FIXTURE_DIR) / name;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace qda::testing
