#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dftc/error.hpp"
#include "dftc/nn.hpp"

namespace dftc::nn {

using nlohmann::json;

std::string model_to_json(const ModelParams& mp) {
  json j;
  j["format"] = "dftc-model/1";
  j["kind"] = mp.arch.recurrent() ? "dftc" : "fnn";
  j["arch"] = {{"H", mp.arch.hidden},          {"m", mp.arch.window},
               {"fc_sizes", mp.arch.fc_sizes}, {"blocks", mp.arch.blocks},
               {"channels", mp.arch.channels}, {"outputs", mp.arch.outputs}};
  j["normalizer"] = {
      {"mean", std::vector<double>(mp.normalizer.mean.data(), mp.normalizer.mean.data() + 6)},
      {"std", std::vector<double>(mp.normalizer.std.data(), mp.normalizer.std.data() + 6)}};
  json weights = json::object();
  for (const Slot& s : mp.layout.slots()) {
    weights[s.name] = {{"shape", {s.rows, s.cols}},
                       {"data", std::vector<double>(mp.values.begin() + s.offset,
                                                    mp.values.begin() + s.offset + s.size())}};
  }
  j["weights"] = std::move(weights);
  j["param_count"] = mp.param_count();
  return j.dump(1);
}

ModelParams model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    const json& a = j.at("arch");
    Architecture arch;
    arch.hidden = a.at("H").get<int>();
    arch.window = a.at("m").get<int>();
    arch.fc_sizes = a.at("fc_sizes").get<std::vector<int>>();
    arch.blocks = a.at("blocks").get<int>();
    arch.channels = a.at("channels").get<int>();
    arch.outputs = a.at("outputs").get<int>();

    const auto mean = j.at("normalizer").at("mean").get<std::vector<double>>();
    const auto stdv = j.at("normalizer").at("std").get<std::vector<double>>();
    if (mean.size() != 6 || stdv.size() != 6) throw ParseError("normalizer must have 6 entries");
    Normalizer norm;
    for (int c = 0; c < 6; ++c) {
      norm.mean[c] = mean[c];
      norm.std[c] = stdv[c];
    }

    ModelParams mp(arch, norm);
    const json& w = j.at("weights");
    if (w.size() != mp.layout.slots().size()) {
      throw ParseError("model file has " + std::to_string(w.size()) + " weight arrays, expected " +
                       std::to_string(mp.layout.slots().size()));
    }
    for (const Slot& s : mp.layout.slots()) {
      if (!w.contains(s.name)) throw ParseError("missing weight array '" + s.name + "'");
      const auto shape = w.at(s.name).at("shape").get<std::vector<Eigen::Index>>();
      const auto data = w.at(s.name).at("data").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] != s.rows || shape[1] != s.cols ||
          static_cast<Eigen::Index>(data.size()) != s.size()) {
        std::ostringstream os;
        os << "shape mismatch for '" << s.name << "': expected " << s.rows << "x" << s.cols
           << " (" << s.size() << " values), file has " << data.size() << " values";
        throw ParseError(os.str());
      }
      std::copy(data.begin(), data.end(), mp.values.begin() + s.offset);
    }
    const auto count = j.at("param_count").get<std::size_t>();
    if (count != mp.param_count()) {
      throw ParseError("param_count " + std::to_string(count) + " does not match architecture (" +
                       std::to_string(mp.param_count()) + ")");
    }
    return mp;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("invalid model file: ") + e.what());
  }
}

void save_model(const ModelParams& mp, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write model file " + path.string());
  os << model_to_json(mp) << '\n';
  if (!os) throw IoError("failed writing model file " + path.string());
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read model file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace dftc::nn
