#pragma once

// Versioned runtime resources: prompt templates, role output schemas and the
// pinned stopword list. Located through QDA_RESOURCE_DIR, falling back to the
// directory recorded at build time.

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>

namespace qda::resources {

inline constexpr std::string_view kPromptVersion = "v1";
inline constexpr std::string_view kStopwordVersion = "v1";

std::filesystem::path resource_dir();

/// Contents of a file below the resource directory, cached after first read.
/// Throws Error(ResourceError) when missing.
const std::string& load(const std::string& relative_path);

const std::unordered_set<std::string>& stopwords();

}  // namespace qda::resources
