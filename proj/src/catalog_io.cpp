#include <fstream>
#include <sstream>

#include "adprune/catalog.hpp"
#include "adprune/errors.hpp"
#include "adprune/json_io.hpp"

namespace adprune {

namespace {

using nlohmann::json;

constexpr const char* kWorldFormat = "adprune-world";
constexpr int kWorldFormatVersion = 1;

json ad_to_json(const AdCreativeEntry& ad) {
  return json{{"id", ad.creative_id},
              {"bid", ad.bid},
              {"embedding", ad.creative_embedding},
              {"strong", ad.strong_style_compatible},
              {"styles", ad.compatible_style_ids}};
}

AdCreativeEntry ad_from_json(const json& j) {
  AdCreativeEntry ad;
  ad.creative_id = j.at("id").get<CreativeId>();
  ad.bid = j.at("bid").get<double>();
  ad.creative_embedding = j.at("embedding").get<std::vector<double>>();
  ad.strong_style_compatible = j.at("strong").get<bool>();
  ad.compatible_style_ids = j.at("styles").get<std::vector<StyleId>>();
  return ad;
}

json group_to_json(const Group& g) {
  json ads = json::array();
  for (const auto& ad : g.ads) ads.push_back(ad_to_json(ad));
  return json{{"id", g.group_id},
              {"keywords", g.keyword_ids},
              {"geo_mask", g.target_constraints.geo_mask},
              {"hour_mask", g.target_constraints.hour_mask},
              {"ads", std::move(ads)}};
}

Group group_from_json(const json& j) {
  Group g;
  g.group_id = j.at("id").get<GroupId>();
  g.keyword_ids = j.at("keywords").get<std::vector<KeywordId>>();
  g.target_constraints.geo_mask = j.at("geo_mask").get<std::uint32_t>();
  g.target_constraints.hour_mask = j.at("hour_mask").get<std::uint32_t>();
  for (const auto& a : j.at("ads")) g.ads.push_back(ad_from_json(a));
  return g;
}

json advertiser_to_json(const Advertiser& adv) {
  json campaigns = json::array();
  for (const auto& c : adv.campaigns) {
    json groups = json::array();
    for (const auto& g : c.groups) groups.push_back(group_to_json(g));
    campaigns.push_back(json{{"id", c.campaign_id}, {"groups", std::move(groups)}});
  }
  return json{{"id", adv.advertiser_id},
              {"quality", adv.quality_score},
              {"budget", adv.daily_budget ? json(*adv.daily_budget) : json(nullptr)},
              {"home_class", adv.home_class},
              {"campaigns", std::move(campaigns)}};
}

Advertiser advertiser_from_json(const json& j) {
  Advertiser adv;
  adv.advertiser_id = j.at("id").get<AdvertiserId>();
  adv.quality_score = j.at("quality").get<double>();
  if (!j.at("budget").is_null()) adv.daily_budget = j.at("budget").get<double>();
  adv.home_class = j.at("home_class").get<QueryClass>();
  for (const auto& c : j.at("campaigns")) {
    Campaign camp;
    camp.campaign_id = c.at("id").get<CampaignId>();
    for (const auto& g : c.at("groups")) camp.groups.push_back(group_from_json(g));
    adv.campaigns.push_back(std::move(camp));
  }
  return adv;
}

}  // namespace

std::string serialize_world(const World& w) {
  json advertisers = json::array();
  for (const auto& a : w.advertisers) advertisers.push_back(advertiser_to_json(a));
  json keywords = json::array();
  for (const auto& k : w.keywords)
    keywords.push_back(json{{"id", k.keyword_id}, {"class", k.query_class}, {"embedding", k.embedding}});
  json styles = json::array();
  for (const auto& s : w.styles)
    styles.push_back(json{{"id", s.style_id},
                          {"strong", s.strong},
                          {"bonus", s.bonus_by_class},
                          {"available", s.available_by_class}});
  json blacklist = json::array();
  for (const auto& [a, c] : w.blacklist) blacklist.push_back(json::array({a, c}));
  const auto& cm = w.click_model_params;

  json archive{
      {"format", kWorldFormat},
      {"version", kWorldFormatVersion},
      {"seed", w.seed},
      {"config", w.config},
      {"body",
       {{"embedding_dim", w.embedding_dim},
        {"num_geos", w.num_geos},
        {"class_spread", w.class_spread},
        {"class_centroids", w.class_centroids},
        {"class_weights", w.class_weights},
        {"click_model",
         {{"intercept", cm.intercept},
          {"sim_weight", cm.sim_weight},
          {"quality_weight", cm.quality_weight},
          {"position_decay", cm.position_decay}}},
        {"keywords", std::move(keywords)},
        {"styles", std::move(styles)},
        {"blacklist", std::move(blacklist)},
        {"advertisers", std::move(advertisers)}}}};
  return archive.dump();
}

World deserialize_world(const std::string& text) {
  json archive;
  try {
    archive = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("world archive is not valid JSON: ") + e.what());
  }
  try {
    if (archive.at("format") != kWorldFormat) throw SchemaError("not a world archive");
    const int version = archive.at("version").get<int>();
    if (version != kWorldFormatVersion)
      throw SchemaError("unsupported world archive version " + std::to_string(version));
    World w;
    w.seed = archive.at("seed").get<std::uint64_t>();
    w.config = archive.at("config").get<WorldConfig>();
    const auto& body = archive.at("body");
    w.embedding_dim = body.at("embedding_dim").get<std::uint32_t>();
    w.num_geos = body.at("num_geos").get<std::uint32_t>();
    w.class_spread = body.at("class_spread").get<double>();
    w.class_centroids = body.at("class_centroids").get<std::vector<std::vector<double>>>();
    w.class_weights = body.at("class_weights").get<std::vector<double>>();
    const auto& cm = body.at("click_model");
    w.click_model_params = ClickModelParams{cm.at("intercept").get<double>(), cm.at("sim_weight").get<double>(),
                                            cm.at("quality_weight").get<double>(),
                                            cm.at("position_decay").get<double>()};
    for (const auto& k : body.at("keywords"))
      w.keywords.push_back(Keyword{k.at("id").get<KeywordId>(), k.at("embedding").get<std::vector<double>>(),
                                   k.at("class").get<QueryClass>()});
    for (const auto& s : body.at("styles"))
      w.styles.push_back(Style{s.at("id").get<StyleId>(), s.at("strong").get<bool>(),
                               s.at("bonus").get<std::vector<double>>(),
                               s.at("available").get<std::vector<bool>>()});
    for (const auto& e : body.at("blacklist"))
      w.blacklist.insert({e.at(0).get<AdvertiserId>(), e.at(1).get<QueryClass>()});
    for (const auto& a : body.at("advertisers")) w.advertisers.push_back(advertiser_from_json(a));
    w.finalize();
    return w;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed world archive: ") + e.what());
  }
}

void save_world(const World& world, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << serialize_world(world);
  if (!out) throw Error("failed writing " + path.string());
}

World load_world(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open world archive " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_world(ss.str());
}

}  // namespace adprune
