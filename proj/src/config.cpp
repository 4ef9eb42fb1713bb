#include "dspk/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dspk {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (known.find(it.key()) == known.end())
      throw ContractError("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

RunConfig parse_run_config_text(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ContractError(std::string("config: parse error: ") + e.what());
  }
  RunConfig rc;
  reject_unknown(j,
                 {"seed", "out_dir", "data", "generator", "discriminator",
                  "loss", "g_pre", "d_pre", "gan"},
                 "top level");
  get_to(j, "seed", rc.train.seed);
  get_to(j, "out_dir", rc.out_dir);
  if (j.contains("data")) {
    const json& d = j["data"];
    reject_unknown(d, {"low_dir", "high_dir"}, "data");
    get_to(d, "low_dir", rc.low_dir);
    get_to(d, "high_dir", rc.high_dir);
  }
  if (j.contains("generator")) {
    const json& g = j["generator"];
    reject_unknown(g,
                   {"stem_kernel", "channels", "n_resblocks", "convs_per_block",
                    "block_kernel", "out_channels", "conv_shortcut",
                    "bn_momentum", "bn_eps"},
                   "generator");
    auto& c = rc.train.gen;
    get_to(g, "stem_kernel", c.stem_kernel);
    get_to(g, "channels", c.channels);
    get_to(g, "n_resblocks", c.n_resblocks);
    get_to(g, "convs_per_block", c.convs_per_block);
    get_to(g, "block_kernel", c.block_kernel);
    get_to(g, "out_channels", c.out_channels);
    get_to(g, "conv_shortcut", c.conv_shortcut);
    get_to(g, "bn_momentum", c.bn_momentum);
    get_to(g, "bn_eps", c.bn_eps);
  }
  if (j.contains("discriminator")) {
    const json& d = j["discriminator"];
    reject_unknown(d, {"base_channels", "n_stages", "kernel", "leaky_alpha"},
                   "discriminator");
    auto& c = rc.train.disc;
    get_to(d, "base_channels", c.base_channels);
    get_to(d, "n_stages", c.n_stages);
    get_to(d, "kernel", c.kernel);
    get_to(d, "leaky_alpha", c.leaky_alpha);
  }
  if (j.contains("loss")) {
    const json& l = j["loss"];
    reject_unknown(l, {"lambda", "ms_ssim"}, "loss");
    get_to(l, "lambda", rc.train.loss.lambda);
    if (l.contains("ms_ssim")) {
      const json& m = l["ms_ssim"];
      reject_unknown(m, {"scales", "sigmas", "c1", "c2"}, "loss.ms_ssim");
      auto& c = rc.train.loss.ms_ssim;
      get_to(m, "scales", c.scales);
      get_to(m, "sigmas", c.sigmas);
      get_to(m, "c1", c.c1);
      get_to(m, "c2", c.c2);
    }
  }
  if (j.contains("g_pre")) {
    const json& p = j["g_pre"];
    reject_unknown(p, {"epochs", "crop", "lr", "batch"}, "g_pre");
    auto& c = rc.train.g_pre;
    get_to(p, "epochs", c.epochs);
    get_to(p, "crop", c.crop);
    get_to(p, "lr", c.lr);
    get_to(p, "batch", c.batch);
  }
  if (j.contains("d_pre")) {
    const json& p = j["d_pre"];
    reject_unknown(p, {"epochs", "crop", "lr", "batch"}, "d_pre");
    auto& c = rc.train.d_pre;
    get_to(p, "epochs", c.epochs);
    get_to(p, "crop", c.crop);
    get_to(p, "lr", c.lr);
    get_to(p, "batch", c.batch);
  }
  if (j.contains("gan")) {
    const json& p = j["gan"];
    reject_unknown(p,
                   {"iterations", "g_steps_per_iter", "d_steps_per_iter",
                    "d_lr", "g_lr", "g_batch", "d_batch", "g_crop", "d_crop",
                    "buffer_capacity", "checkpoint_every"},
                   "gan");
    auto& c = rc.train.gan;
    get_to(p, "iterations", c.iterations);
    get_to(p, "g_steps_per_iter", c.g_steps_per_iter);
    get_to(p, "d_steps_per_iter", c.d_steps_per_iter);
    get_to(p, "d_lr", c.d_lr);
    get_to(p, "g_lr", c.g_lr);
    get_to(p, "g_batch", c.g_batch);
    get_to(p, "d_batch", c.d_batch);
    get_to(p, "g_crop", c.g_crop);
    get_to(p, "d_crop", c.d_crop);
    get_to(p, "buffer_capacity", c.buffer_capacity);
    get_to(p, "checkpoint_every", c.checkpoint_every);
  }
  rc.train.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config_text(ss.str());
}

}  // namespace dspk
