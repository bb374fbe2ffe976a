#include "qda/schema.hpp"

#include <regex>

#include "qda/text.hpp"

namespace qda::schema {

namespace {

using nlohmann::json;

bool has_type(const json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    return false;
}

std::optional<std::string> check(const json& s, const json& v, const std::string& path) {
    auto fail = [&](const std::string& why) { return std::optional<std::string>(path.empty() ? "/: " + why : path + ": " + why); };
    if (auto t = s.find("type"); t != s.end()) {
        bool ok = false;
        if (t->is_array()) {
            for (const auto& one : *t) {
                ok = ok || has_type(v, one.get<std::string>());
            }
        } else {
            ok = has_type(v, t->get<std::string>());
        }
        if (!ok) {
            return fail("expected type " + t->dump());
        }
    }
    if (v.is_null()) {
        return std::nullopt;
    }
    if (v.is_object()) {
        if (auto req = s.find("required"); req != s.end()) {
            for (const auto& key : *req) {
                if (!v.contains(key.get<std::string>())) {
                    return fail("missing required field '" + key.get<std::string>() + "'");
                }
            }
        }
        if (auto props = s.find("properties"); props != s.end()) {
            for (const auto& [key, sub] : props->items()) {
                if (auto it = v.find(key); it != v.end()) {
                    if (auto err = check(sub, *it, path + "/" + key)) {
                        return err;
                    }
                }
            }
        }
    }
    if (v.is_array()) {
        if (auto mi = s.find("minItems"); mi != s.end() && v.size() < mi->get<std::size_t>()) {
            return fail("expected at least " + mi->dump() + " item(s)");
        }
        if (auto items = s.find("items"); items != s.end()) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (auto err = check(*items, v[i], path + "/" + std::to_string(i))) {
                    return err;
                }
            }
        }
    }
    if (v.is_string()) {
        const auto& str = v.get_ref<const std::string&>();
        const std::size_t len = text::code_point_count(str);
        if (auto ml = s.find("minLength"); ml != s.end() && len < ml->get<std::size_t>()) {
            return fail("string shorter than " + ml->dump());
        }
        if (auto ml = s.find("maxLength"); ml != s.end() && len > ml->get<std::size_t>()) {
            return fail("string longer than " + ml->dump());
        }
        if (auto pat = s.find("pattern"); pat != s.end()) {
            const std::regex re(pat->get<std::string>(), std::regex::ECMAScript);
            if (!std::regex_search(str, re)) {
                return fail("string does not match " + pat->get<std::string>());
            }
        }
    }
    if (v.is_number()) {
        if (auto mn = s.find("minimum"); mn != s.end() && v.get<double>() < mn->get<double>()) {
            return fail("number below minimum " + mn->dump());
        }
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::string> validate(const nlohmann::json& schema, const nlohmann::json& value) {
    return check(schema, value, "");
}

}  // namespace qda::schema
