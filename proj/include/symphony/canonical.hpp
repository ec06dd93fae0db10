#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include <json.hpp>

#include "symphony/errors.hpp"

namespace symphony::canonical {

using Json = nlohmann::json;

// Canonical JSON: sorted object keys (nlohmann stores objects in a std::map),
// no insignificant whitespace, UTF-8, reals rendered as the shortest decimal
// that round-trips. Two equal values therefore always serialize to identical
// bytes, which is what signatures and dedup keys are computed over.

inline double normalize_real(double v, const char* field) {
    if (!std::isfinite(v)) {
        throw EncodingError(std::string("non-finite value in field '") + field + "'");
    }
    // fold negative zero so value equality implies byte equality
    return v == 0.0 ? 0.0 : v;
}

inline void check_finite(const Json& j, const std::string& path = "$") {
    if (j.is_number_float() && !std::isfinite(j.get<double>())) {
        throw EncodingError("non-finite value at " + path);
    }
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) check_finite(it.value(), path + "." + it.key());
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) check_finite(j[i], path + "[" + std::to_string(i) + "]");
    }
}

inline std::string dump(const Json& j) {
    check_finite(j);
    return j.dump();
}

// Strict parse; the error carries the byte position reported by the parser.
inline Json parse(std::string_view bytes) {
    Json j = Json::parse(bytes, nullptr, false);
    if (j.is_discarded()) {
        // re-parse with exceptions to recover the position detail
        try {
            return Json::parse(bytes);
        } catch (const nlohmann::json::parse_error& e) {
            throw DecodeError(std::string("malformed JSON: ") + e.what());
        }
    }
    return j;
}

// Canonical rendering of a single real, used wherever a float must become
// text outside a JSON document (answer normalization, reports).
inline std::string render_real(double v) {
    return dump(Json(normalize_real(v, "value")));
}

} // namespace symphony::canonical
