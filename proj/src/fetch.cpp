#include "nfgp/errors.hpp"
#include "nfgp/market_data.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <fstream>
#include <regex>

namespace nfgp {

void fetch_prices_csv(const std::string& url, const std::filesystem::path& out) {
  static const std::regex kUrl(R"(^(https?://[^/?#]+)([^#]*)$)");
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) {
    throw ConfigError(fmt::format("fetch: '{}' is not an http(s) URL", url));
  }
  const std::string origin = m[1].str();
  const std::string target = m[2].str().empty() ? "/" : m[2].str();

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (origin.rfind("https://", 0) == 0) {
    throw ConfigError("fetch: this build has no TLS support; use an http:// URL");
  }
#endif

  httplib::Client client(origin);
  client.set_follow_location(true);
  client.set_connection_timeout(10);
  client.set_read_timeout(60);
  const auto res = client.Get(target);
  if (!res) {
    throw DataError(fmt::format("fetch: request to '{}' failed ({})", url, httplib::to_string(res.error())));
  }
  if (res->status != 200) {
    throw DataError(fmt::format("fetch: '{}' answered HTTP {}", url, res->status));
  }

  std::filesystem::path partial = out;
  partial += ".part";
  {
    std::ofstream file(partial, std::ios::binary);
    if (!file) throw DataError(fmt::format("fetch: cannot write '{}'", partial.string()));
    file << res->body;
  }
  try {
    (void)load_prices_csv(partial);
  } catch (...) {
    std::filesystem::remove(partial);
    throw;
  }
  std::filesystem::rename(partial, out);
}

}  // namespace nfgp
