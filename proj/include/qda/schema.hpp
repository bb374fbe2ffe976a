#pragma once

// Validator for the JSON-schema subset used by the role output schemas:
// type (single or list), required, properties, items, minItems, minLength,
// maxLength, pattern and minimum. Unknown keywords are ignored.

#include <optional>
#include <string>

#include <json.hpp>

namespace qda::schema {

/// First violation found, as "<json-pointer>: <reason>", or nullopt.
std::optional<std::string> validate(const nlohmann::json& schema, const nlohmann::json& value);

}  // namespace qda::schema
