#include "nfgp/errors.hpp"
#include "nfgp/icnn.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace nfgp::icnn {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "nfgp.icnn";
constexpr int kVersion = 1;

std::string hex(double v) { return fmt::format("{:a}", v); }

double parse_hex(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw DataError(fmt::format("icnn json: cannot parse number '{}'", s));
  }
  return v;
}

json encode(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(hex(m(i, j)));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd decode(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw DataError(fmt::format("icnn json: array of shape {}x{} holds {} values", rows, cols,
                                data.size()));
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t pos = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = parse_hex(data[pos++].get<std::string>());
  }
  return m;
}

Eigen::VectorXd decode_vector(const json& j) {
  Eigen::MatrixXd m = decode(j);
  if (m.cols() != 1) throw DataError("icnn json: expected a column vector");
  return m.col(0);
}

}  // namespace

std::string to_json(const ICNNParams& theta) {
  theta.validate();
  json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["activation"] = theta.activation;
  doc["inputs"] = theta.inputs();
  doc["widths"] = theta.widths;
  doc["W"] = json::array();
  for (const auto& m : theta.W) doc["W"].push_back(encode(m));
  doc["U"] = json::array();
  for (const auto& m : theta.U) doc["U"].push_back(encode(m));
  doc["b"] = json::array();
  for (const auto& v : theta.b) doc["b"].push_back(encode(v));
  doc["w"] = encode(theta.w);
  doc["u"] = encode(theta.u);
  doc["c"] = hex(theta.c);
  return doc.dump(1);
}

ICNNParams from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(fmt::format("icnn json: {}", e.what()));
  }
  try {
    if (doc.at("format").get<std::string>() != kFormat) {
      throw DataError("icnn json: unexpected format tag");
    }
    if (doc.at("version").get<int>() != kVersion) {
      throw DataError(fmt::format("icnn json: unsupported version {}", doc.at("version").dump()));
    }
    ICNNParams p;
    p.activation = doc.at("activation").get<std::string>();
    if (p.activation != "softplus") {
      throw DataError(fmt::format("icnn json: unsupported activation '{}'", p.activation));
    }
    p.widths = doc.at("widths").get<std::vector<int>>();
    for (const auto& m : doc.at("W")) p.W.push_back(decode(m));
    for (const auto& m : doc.at("U")) p.U.push_back(decode(m));
    for (const auto& v : doc.at("b")) p.b.push_back(decode_vector(v));
    p.w = decode_vector(doc.at("w"));
    p.u = decode_vector(doc.at("u"));
    p.c = parse_hex(doc.at("c").get<std::string>());
    if (p.u.size() != doc.at("inputs").get<Eigen::Index>()) {
      throw DataError("icnn json: 'inputs' disagrees with u");
    }
    try {
      p.validate();
    } catch (const DimensionError& e) {
      throw DataError(e.what());
    }
    return p;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("icnn json: {}", e.what()));
  }
}

void save(const std::filesystem::path& path, const ICNNParams& theta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  out << to_json(theta) << '\n';
  if (!out) throw DataError(fmt::format("failed writing '{}'", path.string()));
}

ICNNParams load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

}  // namespace nfgp::icnn
