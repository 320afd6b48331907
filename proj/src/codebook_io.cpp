#include <cstdio>
#include <cstdlib>
#include <string>

#include "json.hpp"

#include "mbssl/clustering.hpp"
#include "mbssl/error.hpp"

namespace mbssl {

using ordered_json = nlohmann::ordered_json;

namespace {

double round_to_9_digits(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

std::string channel_name(const std::optional<Channel>& channel) {
  return channel ? std::string(to_string(*channel)) : std::string("pooled");
}

ordered_json codebook_json(const Codebook& book) {
  ordered_json j;
  j["feature_dim"] = book.feature_dim();
  j["k"] = book.k();
  j["channel"] = channel_name(book.channel);
  j["seed"] = book.seed;
  j["empty_cluster_reseeds"] = book.empty_cluster_reseeds;
  j["inertia_history"] = book.inertia_history;
  ordered_json rows = ordered_json::array();
  for (std::size_t r = 0; r < book.k(); ++r) {
    ordered_json row = ordered_json::array();
    for (double v : book.centroids.row(r)) row.push_back(round_to_9_digits(v));
    rows.push_back(std::move(row));
  }
  j["centroids"] = std::move(rows);
  return j;
}

Codebook codebook_from(const ordered_json& j) {
  Codebook book;
  const auto dim = j.at("feature_dim").get<std::size_t>();
  const auto k = j.at("k").get<std::size_t>();
  const auto channel = j.at("channel").get<std::string>();
  if (channel != "pooled") {
    book.channel = parse_channel(channel);
    if (!book.channel) throw Error(Errc::MalformedFile, "unknown channel '" + channel + "'");
  }
  book.seed = j.at("seed").get<std::uint64_t>();
  book.empty_cluster_reseeds = j.value("empty_cluster_reseeds", std::size_t{0});
  if (j.contains("inertia_history")) {
    book.inertia_history = j.at("inertia_history").get<std::vector<double>>();
  }
  const auto& rows = j.at("centroids");
  if (!rows.is_array() || rows.size() != k || k == 0) {
    throw Error(Errc::MalformedFile, "centroids must be a non-empty array of k rows");
  }
  book.centroids = Matrix(k, dim);
  for (std::size_t r = 0; r < k; ++r) {
    const auto values = rows.at(r).get<std::vector<double>>();
    if (values.size() != dim) {
      throw Error(Errc::MalformedFile, "centroid row " + std::to_string(r) + " has " +
                                           std::to_string(values.size()) + " values, expected " +
                                           std::to_string(dim));
    }
    std::copy(values.begin(), values.end(), book.centroids.row(r).begin());
  }
  return book;
}

ordered_json parse(std::string_view text) {
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedFile, std::string("codebook JSON: ") + e.what());
  }
}

template <typename Fn>
auto guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedFile, std::string("codebook JSON: ") + e.what());
  }
}

}  // namespace

std::string codebook_to_json(const Codebook& codebook) {
  return codebook_json(codebook).dump(1) + "\n";
}

Codebook codebook_from_json(std::string_view text) {
  const ordered_json j = parse(text);
  return guarded([&] { return codebook_from(j); });
}

std::string pooled_codebook_to_json(const PooledCodebook& pooled) {
  ordered_json j;
  j["channel"] = "channel_aware";
  j["feature_dim"] = pooled.feature_dim();
  j["offset"] = pooled.offset;
  j["vocab_size"] = pooled.vocab_size();
  j["wide"] = codebook_json(pooled.wide);
  j["narrow"] = codebook_json(pooled.narrow);
  return j.dump(1) + "\n";
}

PooledCodebook pooled_codebook_from_json(std::string_view text) {
  const ordered_json j = parse(text);
  return guarded([&] {
    PooledCodebook pooled = pool_codebooks(codebook_from(j.at("wide")),
                                           codebook_from(j.at("narrow")),
                                           j.at("offset").get<ClusterId>());
    if (j.contains("vocab_size") && j.at("vocab_size").get<std::size_t>() != pooled.vocab_size()) {
      throw Error(Errc::MalformedFile, "vocab_size disagrees with offset + narrow.k");
    }
    return pooled;
  });
}

bool is_pooled_codebook_json(std::string_view text) {
  const ordered_json j = parse(text);
  return j.is_object() && j.contains("offset") && j.contains("wide");
}

Codebook quantize_for_storage(Codebook codebook) {
  for (double& v : codebook.centroids.data()) v = round_to_9_digits(v);
  return codebook;
}

}  // namespace mbssl
