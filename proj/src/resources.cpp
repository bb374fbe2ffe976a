#include "qda/resources.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "qda/error.hpp"
#include "qda/text.hpp"

#ifndef QDA_DEFAULT_RESOURCE_DIR
#define QDA_DEFAULT_RESOURCE_DIR "resources"
#endif

namespace qda::resources {

namespace {

std::mutex& cache_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

std::filesystem::path resource_dir() {
    if (const char* env = std::getenv("QDA_RESOURCE_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return QDA_DEFAULT_RESOURCE_DIR;
}

const std::string& load(const std::string& relative_path) {
    static std::map<std::string, std::string> cache;
    const std::filesystem::path path = resource_dir() / relative_path;
    const std::string key = path.string();
    std::lock_guard lock(cache_mutex());
    if (auto it = cache.find(key); it != cache.end()) {
        return it->second;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::ResourceError, "cannot read resource " + key);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return cache.emplace(key, ss.str()).first->second;
}

const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words = [] {
        std::unordered_set<std::string> out;
        const std::string& raw = load("stopwords/" + std::string(kStopwordVersion) + ".txt");
        for (const auto& line : text::split(raw, '\n')) {
            const auto word = text::trim(line);
            if (!word.empty() && word.front() != '#') {
                out.insert(text::ascii_lower(word));
            }
        }
        return out;
    }();
    return words;
}

}  // namespace qda::resources
