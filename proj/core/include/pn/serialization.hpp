#pragma once

#include "pn/randvars.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace pn::serialization {

using json = nlohmann::json;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

json to_json(const Vector& v);
json to_json(const Matrix& m);  // array of rows

// {"type": "gaussian", "mean": [...], "cov": [[...]], "std": [...]}
json to_json(const randvars::GaussianBelief& rv);

// Strict readers; `where` names the field in error messages.
double read_number(const json& j, const std::string& where);
Vector read_vector(const json& j, const std::string& where);
Matrix read_matrix(const json& j, const std::string& where);
randvars::GaussianBelief read_belief(const json& j);

// Parses text, reporting line and column on failure (ParseError).
json parse(const std::string& text, const std::string& source);

// Throws ParseError naming the first field of `obj` not in `allowed`.
void check_fields(const json& obj, std::initializer_list<const char*> allowed, const std::string& where);

}  // namespace pn::serialization
