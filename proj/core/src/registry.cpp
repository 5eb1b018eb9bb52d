#include <json.hpp>

#include "osr/data.hpp"
#include "osr/error.hpp"

namespace osr {

namespace detail {
extern const std::string_view kSplitsJson;
}

const std::vector<SplitSpec>& split_registry() {
  static const std::vector<SplitSpec> registry = [] {
    std::vector<SplitSpec> out;
    auto doc = nlohmann::json::parse(detail::kSplitsJson);
    for (const auto& e : doc.at("splits")) {
      SplitSpec s;
      s.protocol = parse_protocol(e.at("protocol").get<std::string>());
      s.dataset = e.at("dataset").get<std::string>();
      s.trial = e.at("trial").get<int>();
      s.known = e.at("known").get<std::vector<int64_t>>();
      s.open = e.at("open").get<std::vector<int64_t>>();
      out.push_back(std::move(s));
    }
    return out;
  }();
  return registry;
}

const SplitSpec& registry_lookup(Protocol protocol, std::string_view dataset, int trial) {
  for (const auto& s : split_registry())
    if (s.protocol == protocol && s.dataset == dataset && s.trial == trial) return s;
  fail(ErrorKind::NotFound, "no registered split for protocol=" + std::string(to_string(protocol)) +
                                " dataset=" + std::string(dataset) + " trial=" + std::to_string(trial));
}

}  // namespace osr
