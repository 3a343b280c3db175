#include "json_schema.h"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace xlint::testing {

using nlohmann::json;

SchemaValidator SchemaValidator::FromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open schema " + path);
  return SchemaValidator(json::parse(in));
}

std::vector<std::string> SchemaValidator::Validate(const json& instance) const {
  std::vector<std::string> errors;
  Check(root_, instance, "$", &errors);
  return errors;
}

const json& SchemaValidator::Resolve(const std::string& ref) const {
  if (ref.rfind("#/", 0) != 0) throw std::runtime_error("unsupported $ref " + ref);
  // JSON pointer; definitions names may contain %-escapes and ~ escapes.
  std::string pointer;
  for (std::size_t i = 1; i < ref.size(); ++i) {
    if (ref[i] == '%' && i + 2 < ref.size()) {
      pointer += static_cast<char>(std::stoi(ref.substr(i + 1, 2), nullptr, 16));
      i += 2;
    } else {
      pointer += ref[i];
    }
  }
  return root_.at(json::json_pointer(pointer));
}

namespace {

bool TypeMatches(const std::string& type, const json& v) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "number") return v.is_number();
  if (type == "integer") {
    if (v.is_number_integer()) return true;
    if (!v.is_number_float()) return false;
    const double d = v.get<double>();
    return std::isfinite(d) && d == std::floor(d);
  }
  throw std::runtime_error("unknown schema type " + type);
}

bool JsonEqual(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return a.get<double>() == b.get<double>();
  return a == b;
}

}  // namespace

bool SchemaValidator::Check(const json& schema, const json& v, const std::string& path,
                            std::vector<std::string>* errors) const {
  auto fail = [&](const std::string& msg) {
    if (errors) errors->push_back(path + ": " + msg);
    return false;
  };
  if (schema.is_boolean()) return schema.get<bool>() ? true : fail("schema is false");
  if (!schema.is_object()) return true;

  if (auto it = schema.find("$ref"); it != schema.end()) {
    // draft-07: siblings of $ref are ignored.
    return Check(Resolve(it->get<std::string>()), v, path, errors);
  }

  if (auto it = schema.find("type"); it != schema.end()) {
    bool ok = false;
    if (it->is_string()) {
      ok = TypeMatches(it->get<std::string>(), v);
    } else {
      for (const auto& t : *it) ok = ok || TypeMatches(t.get<std::string>(), v);
    }
    if (!ok) return fail("expected type " + it->dump() + ", got " + v.type_name());
  }
  if (auto it = schema.find("const"); it != schema.end() && !JsonEqual(*it, v)) {
    return fail("expected constant " + it->dump());
  }
  if (auto it = schema.find("enum"); it != schema.end()) {
    bool ok = false;
    for (const auto& e : *it) ok = ok || JsonEqual(e, v);
    if (!ok) return fail("not one of " + it->dump());
  }

  if (v.is_number()) {
    const double d = v.get<double>();
    if (auto it = schema.find("minimum"); it != schema.end() && d < it->get<double>()) {
      return fail("below minimum " + it->dump());
    }
    if (auto it = schema.find("maximum"); it != schema.end() && d > it->get<double>()) {
      return fail("above maximum " + it->dump());
    }
  }
  if (v.is_string()) {
    // Length in code points.
    std::size_t n = 0;
    for (unsigned char c : v.get_ref<const std::string&>()) n += (c & 0xC0) != 0x80;
    if (auto it = schema.find("minLength"); it != schema.end() && n < it->get<std::size_t>()) {
      return fail("shorter than minLength");
    }
    if (auto it = schema.find("maxLength"); it != schema.end() && n > it->get<std::size_t>()) {
      return fail("longer than maxLength");
    }
  }
  if (v.is_array()) {
    if (auto it = schema.find("minItems"); it != schema.end() && v.size() < it->get<std::size_t>()) {
      return fail("fewer than minItems");
    }
    if (auto it = schema.find("maxItems"); it != schema.end() && v.size() > it->get<std::size_t>()) {
      return fail("more than maxItems");
    }
    if (auto it = schema.find("items"); it != schema.end()) {
      if (it->is_array()) {
        for (std::size_t i = 0; i < v.size() && i < it->size(); ++i) {
          if (!Check((*it)[i], v[i], path + "[" + std::to_string(i) + "]", errors)) return false;
        }
      } else {
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (!Check(*it, v[i], path + "[" + std::to_string(i) + "]", errors)) return false;
        }
      }
    }
  }
  if (v.is_object()) {
    if (auto it = schema.find("minProperties");
        it != schema.end() && v.size() < it->get<std::size_t>()) {
      return fail("fewer than minProperties");
    }
    if (auto it = schema.find("required"); it != schema.end()) {
      for (const auto& key : *it) {
        if (!v.contains(key.get<std::string>())) return fail("missing required " + key.dump());
      }
    }
    const json* props = nullptr;
    if (auto it = schema.find("properties"); it != schema.end()) props = &*it;
    const json* additional = nullptr;
    if (auto it = schema.find("additionalProperties"); it != schema.end()) additional = &*it;
    for (const auto& [key, value] : v.items()) {
      const std::string sub = path + "." + key;
      if (props && props->contains(key)) {
        if (!Check((*props)[key], value, sub, errors)) return false;
      } else if (additional) {
        if (additional->is_boolean() && !additional->get<bool>()) {
          return fail("unexpected property '" + key + "'");
        }
        if (!Check(*additional, value, sub, errors)) return false;
      }
    }
  }

  if (auto it = schema.find("allOf"); it != schema.end()) {
    for (const auto& s : *it) {
      if (!Check(s, v, path, errors)) return false;
    }
  }
  if (auto it = schema.find("anyOf"); it != schema.end()) {
    std::vector<std::string> branch_errors;
    bool ok = false;
    for (const auto& s : *it) {
      std::vector<std::string> e;
      if (Check(s, v, path, &e)) {
        ok = true;
        break;
      }
      branch_errors.insert(branch_errors.end(), e.begin(), e.end());
    }
    if (!ok) {
      if (errors) {
        // Report the failures that got deepest into the instance.
        std::size_t best = 0;
        for (const auto& e : branch_errors) best = std::max(best, e.find(':'));
        for (const auto& e : branch_errors) {
          if (e.find(':') == best) errors->push_back(e);
        }
      }
      return fail("no anyOf branch matches");
    }
  }
  if (auto it = schema.find("oneOf"); it != schema.end()) {
    int matches = 0;
    for (const auto& s : *it) matches += Check(s, v, path, nullptr);
    if (matches != 1) return fail("oneOf matched " + std::to_string(matches) + " branches");
  }
  return true;
}

}  // namespace xlint::testing
