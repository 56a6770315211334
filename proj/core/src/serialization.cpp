#include "pn/serialization.hpp"

#include "pn/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pn::serialization {

json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(to_json(Vector(m.row(i).transpose())));
  return out;
}

json to_json(const randvars::GaussianBelief& rv) {
  return json{{"type", "gaussian"}, {"mean", to_json(rv.mean())}, {"cov", to_json(rv.cov())}, {"std", to_json(rv.std())}};
}

double read_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(where + ": expected a finite number");
  return v;
}

Vector read_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = read_number(j[i], where + "[" + std::to_string(i) + "]");
  return v;
}

Matrix read_matrix(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of rows");
  if (j.empty()) return Matrix(0, 0);
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string row_where = where + "[" + std::to_string(i) + "]";
    const Vector row = read_vector(j[i], row_where);
    if (static_cast<std::size_t>(row.size()) != cols) throw ParseError(row_where + ": ragged matrix row");
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

randvars::GaussianBelief read_belief(const json& j) {
  if (!j.is_object()) throw ParseError("belief: expected an object");
  check_fields(j, {"type", "mean", "cov", "std"}, "belief");
  if (!j.contains("type") || j["type"] != "gaussian") throw ParseError("belief: type must be \"gaussian\"");
  if (!j.contains("mean") || !j.contains("cov")) throw ParseError("belief: mean and cov are required");
  Vector mean = read_vector(j["mean"], "belief.mean");
  Matrix cov = read_matrix(j["cov"], "belief.cov");
  if (cov.size() == 0 && mean.size() == 0) cov.resize(0, 0);
  try {
    return randvars::GaussianBelief(std::move(mean), std::move(cov));
  } catch (const ArgumentError& e) {
    throw ParseError(std::string("belief: ") + e.what());
  }
}

json parse(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t byte = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
    const std::size_t last_nl = text.rfind('\n', byte == 0 ? 0 : byte - 1);
    const std::size_t column = (last_nl == std::string::npos || byte == 0) ? byte + 1 : byte - last_nl;
    throw ParseError(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": malformed JSON (" +
                     e.what() + ")");
  }
}

void check_fields(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; });
    if (!known) throw ParseError(where + ": unknown field \"" + it.key() + "\"");
  }
}

}  // namespace pn::serialization
