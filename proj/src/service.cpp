#include "cips/service.hpp"

#include <mutex>
#include <stdexcept>
#include <thread>

#include <httplib.h>

#include "cips/checkpoint.hpp"
#include "cips/image.hpp"
#include "cips/sampling.hpp"
#include "cips/synthesis.hpp"

namespace cips {

namespace {

using nlohmann::json;

/// Client errors carry their HTTP status out of the request parser.
struct RequestError : std::runtime_error {
  RequestError(int status, const std::string& message)
      : std::runtime_error(message), status(status) {}
  int status;
};

HttpResponse json_response(int status, const json& body) {
  return {status, "application/json", body.dump()};
}

HttpResponse error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}});
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw RequestError(400, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw RequestError(400, std::string("malformed JSON: ") + e.what());
  }
}

Tensor vector_field(const json& j, const char* key, std::size_t dim) {
  const json& v = j.at(key);
  if (!v.is_array()) throw RequestError(400, std::string("'") + key + "' must be an array");
  if (v.size() != dim) {
    throw RequestError(400, std::string("'") + key + "' has length " + std::to_string(v.size()) +
                                ", expected " + std::to_string(dim));
  }
  std::vector<double> values;
  values.reserve(dim);
  for (const auto& x : v) {
    if (!x.is_number()) throw RequestError(400, std::string("'") + key + "' must hold numbers");
    values.push_back(x.get<double>());
  }
  return Tensor::from({dim}, std::move(values));
}

StyleVector parse_style(const Generator& gen, const json& spec) {
  if (!spec.is_object()) throw RequestError(400, "style must be an object");
  const std::size_t dim = gen.config().latent_dim;
  const int given = int(spec.contains("seed")) + int(spec.contains("z")) + int(spec.contains("w"));
  if (given != 1) throw RequestError(400, "style needs exactly one of seed, z, w");
  NoGradGuard no_grad;
  if (spec.contains("seed")) {
    if (!spec["seed"].is_number_unsigned() && !spec["seed"].is_number_integer()) {
      throw RequestError(400, "seed must be a non-negative integer");
    }
    if (spec["seed"].is_number_integer() && spec["seed"].get<std::int64_t>() < 0) {
      throw RequestError(400, "seed must be a non-negative integer");
    }
    return style_from_seed(gen, spec["seed"].get<std::uint64_t>());
  }
  if (spec.contains("z")) return gen.map_latent(vector_field(spec, "z", dim));
  return {vector_field(spec, "w", dim)};
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw RequestError(400, std::string("field '") + key + "' has the wrong type");
  }
}

std::size_t get_size(const json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw RequestError(400, std::string("field '") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

struct GridPlan {
  CoordGrid grid;
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// Foveated requests render through fill_missing in png mode.
  bool sparse_fill = false;
};

std::size_t checked_area(std::size_t a, std::size_t b, std::size_t cap) {
  if (a != 0 && b > cap / a) throw RequestError(413, "requested grid exceeds the pixel cap");
  return a * b;
}

GridPlan plan_grid(const GeneratorConfig& cfg, const json& spec, std::size_t cap) {
  if (!spec.is_object() || !spec.contains("kind") || !spec["kind"].is_string()) {
    throw RequestError(400, "grid must be an object with a string 'kind'");
  }
  const std::string kind = spec["kind"];
  const std::size_t H = cfg.height, W = cfg.domain_width();
  GridPlan plan;
  try {
    if (kind == "full") {
      plan.grid = model_grid(cfg);
      plan.rows = H;
      plan.cols = W;
    } else if (kind == "patch") {
      if (cfg.cylindrical) throw RequestError(400, "patch grids need a cartesian model");
      PatchSpec ps{get_size(spec, "u", 0), get_size(spec, "v", 0), get_size(spec, "size", 1),
                   get_size(spec, "stride", 1)};
      checked_area(ps.size, ps.size, cap);
      plan.grid = patch_grid(ps, H, W);
      plan.rows = plan.cols = ps.size;
    } else if (kind == "foveated") {
      FoveaSpec fs = FoveaSpec::centered(H, W, get_or<double>(spec, "fraction", 1.0),
                                         get_or<std::uint64_t>(spec, "seed", 0));
      fs.cx = get_or<double>(spec, "cx", fs.cx);
      fs.cy = get_or<double>(spec, "cy", fs.cy);
      fs.sigma = get_or<double>(spec, "sigma", fs.sigma);
      plan.grid = foveated_sample(fs, H, W);
      plan.grid.kind = cfg.grid_kind();
      plan.rows = H;
      plan.cols = W;
      plan.sparse_fill = true;
    } else if (kind == "dense") {
      if (cfg.cylindrical) throw RequestError(400, "dense grids need a cartesian model");
      const std::size_t factor = get_size(spec, "factor", 1);
      if (factor == 0) throw RequestError(400, "dense factor must be >= 1");
      plan.rows = checked_area(H, factor, cap);
      plan.cols = checked_area(W, factor, cap);
      checked_area(plan.rows, plan.cols, cap);
      plan.grid = dense_grid(plan.rows, plan.cols, H, W);
    } else if (kind == "cylinder") {
      if (!cfg.cylindrical) throw RequestError(400, "cylinder grids need a cylindrical model");
      plan.cols = get_size(spec, "width", H);
      plan.rows = get_size(spec, "height", H);
      checked_area(plan.rows, plan.cols, cap);
      plan.grid = cylinder_crop(W, H, plan.cols, plan.rows, get_or<std::int64_t>(spec, "x0", 0),
                                get_size(spec, "y0", 0));
    } else {
      throw RequestError(400, "unknown grid kind '" + kind + "'");
    }
  } catch (const std::out_of_range& e) {
    throw RequestError(400, e.what());
  } catch (const std::invalid_argument& e) {
    throw RequestError(400, e.what());
  }
  if (plan.grid.size() > cap) {
    throw RequestError(413, "request needs " + std::to_string(plan.grid.size()) +
                                " pixels, cap is " + std::to_string(cap));
  }
  return plan;
}

std::string png_body(const Image& img) {
  const auto bytes = encode_png(img);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace

Service::Service(ServiceOptions options) : options_(std::move(options)) {
  if (options_.workers == 0) options_.workers = 1;
}

void Service::load_checkpoint(const std::filesystem::path& path) {
  auto gen = std::make_shared<const Generator>(cips::load_checkpoint(path));
  set_generator(std::move(gen), path.string());
}

void Service::set_generator(std::shared_ptr<const Generator> gen, std::string source) {
  std::unique_lock lock(model_mutex_);
  gen_ = std::move(gen);
  source_ = std::move(source);
}

bool Service::loaded() const {
  std::shared_lock lock(model_mutex_);
  return gen_ != nullptr;
}

HttpResponse Service::healthz() const { return json_response(200, {{"status", "ok"}}); }

HttpResponse Service::model() const {
  std::shared_lock lock(model_mutex_);
  if (!gen_) return error_response(503, "no checkpoint loaded");
  const auto& cfg = gen_->config();
  return json_response(200, {{"config", cfg.to_json()},
                             {"params", gen_->count_params().to_json()},
                             {"resolution", {{"height", cfg.height}, {"width", cfg.domain_width()}}},
                             {"H", cfg.height},
                             {"W", cfg.domain_width()},
                             {"seed", gen_->init_seed()},
                             {"source", source_}});
}

HttpResponse Service::map(const std::string& body) const {
  std::shared_lock lock(model_mutex_);
  if (!gen_) return error_response(503, "no checkpoint loaded");
  try {
    const json req = parse_body(body);
    if (req.contains("w")) throw RequestError(400, "map takes seed or z");
    const StyleVector w = parse_style(*gen_, req);
    const auto v = w.w.data();
    return json_response(200, {{"w", std::vector<double>(v.begin(), v.end())}});
  } catch (const RequestError& e) {
    return error_response(e.status, e.what());
  }
}

HttpResponse Service::synthesize(const std::string& body) {
  const std::size_t limit = options_.workers + options_.queue_depth;
  if (admitted_.fetch_add(1) >= limit) {
    admitted_.fetch_sub(1);
    return error_response(503, "busy: queue depth exceeded");
  }
  struct Release {
    std::atomic<std::size_t>& n;
    ~Release() { n.fetch_sub(1); }
  } release{admitted_};

  std::shared_lock lock(model_mutex_);
  if (!gen_) return error_response(503, "no checkpoint loaded");
  const Generator& gen = *gen_;
  try {
    const json req = parse_body(body);
    if (!req.contains("style")) throw RequestError(400, "missing 'style'");
    const bool has_blend = req.contains("blend");
    const bool has_mix = req.contains("mix");
    if (has_blend && has_mix) throw RequestError(400, "blend and mix are mutually exclusive");
    if ((has_blend || has_mix) && !req.contains("style_b")) {
      throw RequestError(400, std::string(has_blend ? "blend" : "mix") + " requires 'style_b'");
    }
    const std::string mode = get_or<std::string>(req, "response", "png");
    if (mode != "png" && mode != "sparse-json" && mode != "png-base64") {
      throw RequestError(400, "unknown response mode '" + mode + "'");
    }
    const GridPlan plan = plan_grid(gen.config(), req.value("grid", json{{"kind", "full"}}),
                                    options_.pixel_cap);

    const StyleVector wa = parse_style(gen, req["style"]);
    std::optional<StyleVector> wb;
    if (req.contains("style_b")) wb = parse_style(gen, req["style_b"]);

    NoGradGuard no_grad;
    const unsigned threads = options_.threads_per_request;
    Tensor rgb;
    if (has_blend) {
      const json& b = req["blend"];
      const std::string bm = get_or<std::string>(b, "mode", "horizontal-linear");
      BlendMode blend_mode;
      if (bm == "horizontal-linear") {
        blend_mode = BlendMode::horizontal_linear;
      } else if (bm == "radial") {
        blend_mode = BlendMode::radial;
      } else {
        throw RequestError(400, "unknown blend mode '" + bm + "'");
      }
      BlendParams params{get_or<double>(b, "cx", 0.0), get_or<double>(b, "cy", 0.0),
                         get_or<double>(b, "radius", 0.0)};
      rgb = blend_points(gen, plan.grid, wa, *wb, blend_alpha_points(plan.grid, blend_mode, params),
                         threads);
    } else {
      std::optional<BlockRange> range;
      if (has_mix) {
        const json& m = req["mix"];
        range = BlockRange{get_size(m, "first", 1), get_size(m, "last", gen.blocks().size())};
      }
      std::vector<StyleVector> styles;
      try {
        styles = has_mix ? mixed_block_styles(gen, wa, *wb, range) : gen.repeat_style(wa);
      } catch (const std::invalid_argument& e) {
        throw RequestError(400, e.what());
      }
      rgb = gen.render(plan.grid, styles, {}, threads);
    }

    const auto v = rgb.data();
    if (mode == "sparse-json") {
      std::vector<SparsePixel> px(plan.grid.size());
      for (std::size_t i = 0; i < px.size(); ++i) {
        px[i].x = plan.grid.points[i].x;
        px[i].y = plan.grid.points[i].y;
        for (std::size_t c = 0; c < 3; ++c) px[i].rgb[c] = v[i * 3 + c];
      }
      return json_response(200, sparse_to_json(px, plan.grid.height, plan.grid.width, plan.grid.kind));
    }
    Image img;
    if (plan.sparse_fill) {
      std::vector<SparsePixel> px(plan.grid.size());
      for (std::size_t i = 0; i < px.size(); ++i) {
        px[i].x = plan.grid.points[i].x;
        px[i].y = plan.grid.points[i].y;
        for (std::size_t c = 0; c < 3; ++c) px[i].rgb[c] = v[i * 3 + c];
      }
      try {
        img = fill_missing(px, plan.rows, plan.cols);
      } catch (const std::invalid_argument& e) {
        throw RequestError(400, e.what());
      }
    } else {
      img = image_from_rows(rgb, plan.rows, plan.cols);
    }
    if (mode == "png") return {200, "image/png", png_body(img)};
    return json_response(200, {{"png_base64", httplib::detail::base64_encode(png_body(img))},
                               {"height", img.height},
                               {"width", img.width}});
  } catch (const RequestError& e) {
    return error_response(e.status, e.what());
  } catch (const std::domain_error& e) {
    return error_response(400, e.what());
  }
}

HttpResponse Service::reload(const std::string& body) {
  try {
    const json req = parse_body(body);
    std::string path = get_or<std::string>(req, "path", "");
    if (path.empty()) {
      std::shared_lock lock(model_mutex_);
      path = source_;
    }
    if (path.empty() || path == "<memory>") throw RequestError(400, "no checkpoint path to reload");
    load_checkpoint(path);
    return model();
  } catch (const RequestError& e) {
    return error_response(e.status, e.what());
  } catch (const CheckpointError& e) {
    return error_response(400, e.what());
  }
}

HttpResponse Service::handle(const std::string& method, const std::string& path,
                             const std::string& body) {
  try {
    if (method == "GET" && path == "/healthz") return healthz();
    if (method == "GET" && path == "/model") return model();
    if (method == "POST" && path == "/map") return map(body);
    if (method == "POST" && path == "/synthesize") return synthesize(body);
    if (method == "POST" && path == "/reload") return reload(body);
    return error_response(404, "no route for " + method + " " + path);
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

void Service::mount(httplib::Server& server) {
  auto bind = [this](const std::string& method, const std::string& path) {
    return [this, method, path](const httplib::Request& req, httplib::Response& res) {
      const HttpResponse r = handle(method, path, req.body);
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
  };
  server.Get("/healthz", bind("GET", "/healthz"));
  server.Get("/model", bind("GET", "/model"));
  server.Post("/map", bind("POST", "/map"));
  server.Post("/synthesize", bind("POST", "/synthesize"));
  server.Post("/reload", bind("POST", "/reload"));
  if (!options_.ui_dir.empty() && std::filesystem::is_directory(options_.ui_dir)) {
    server.set_mount_point("/ui", options_.ui_dir.string());
  }
  const std::size_t pool = options_.workers + options_.queue_depth;
  server.new_task_queue = [pool] { return new httplib::ThreadPool(pool); };
}

std::pair<std::string, int> parse_listen_address(const std::string& addr) {
  std::string a = addr;
  if (a.empty()) {
    const char* env = std::getenv("CIPS_ADDR");
    a = env != nullptr ? env : "127.0.0.1:8080";
  }
  const auto colon = a.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("address '" + a + "' lacks a port");
  int port = 0;
  try {
    port = std::stoi(a.substr(colon + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("address '" + a + "' has an invalid port");
  }
  if (port < 0 || port > 65535) throw std::invalid_argument("port out of range in '" + a + "'");
  return {a.substr(0, colon), port};
}

bool run_server(Service& service, const std::string& host, int port) {
  httplib::Server server;
  service.mount(server);
  return server.listen(host, port);
}

}  // namespace cips
