#include "brachy/service/http_server.hpp"

#include <csignal>
#include <iostream>
#include <thread>

#include <httplib.h>
#include <pthread.h>

#include "brachy/applicator/needles.hpp"
#include "brachy/applicator/template_model.hpp"
#include "brachy/service/slice_image.hpp"
#include "brachy/volume/phantom.hpp"

namespace brachy {

using ordered = nlohmann::ordered_json;

namespace {

void send_json(httplib::Response& res, int status, const ordered& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const std::exception& e) {
  ordered err;
  int status = 500;
  if (const auto* be = dynamic_cast<const Error*>(&e)) {
    err["kind"] = be->kind();
    const std::string k = be->kind();
    if (k == "not-found") {
      status = 404;
    } else if (k == "conflict") {
      status = 409;
      err["current_revision"] = static_cast<const ConflictError*>(be)->current_revision();
    } else if (k == "stage" || k == "degenerate-configuration") {
      status = 422;
      if (k == "stage") err["stage"] = static_cast<const StageError*>(be)->stage();
    } else if (k == "internal") {
      status = 500;
    } else {
      status = 400;
    }
  } else {
    err["kind"] = "internal";
  }
  err["message"] = e.what();
  send_json(res, status, {{"error", err}});
}

template <typename F>
auto guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const std::exception& e) {
      send_error(res, e);
    }
  };
}

std::optional<double> query_number(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  try {
    std::size_t used = 0;
    const std::string v = req.get_param_value(key);
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(key);
    return d;
  } catch (const std::exception&) {
    throw InputError(std::string("query parameter '") + key + "' must be a number");
  }
}

int query_int(const httplib::Request& req, const char* key) {
  const auto v = query_number(req, key);
  if (!v) throw InputError(std::string("missing query parameter '") + key + "'");
  if (*v != std::floor(*v)) throw InputError(std::string("'") + key + "' must be an integer");
  return int(*v);
}

PlaneAxis query_axis(const httplib::Request& req) {
  if (!req.has_param("axis")) throw InputError("missing query parameter 'axis'");
  return parse_plane_axis(req.get_param_value("axis"));
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("request body: ") + e.what(), std::size_t(e.byte), false);
  }
}

// Posed device meshes for a session; the frame is "image" once a pose exists.
struct SceneMesh {
  TriangleMesh mesh;
  RigidTransformd pose;
  bool in_image_frame = false;
};

TriangleMesh selected_needles(const SessionState& s) {
  const auto holes = hole_grid(s.config);
  std::vector<TriangleMesh> parts;
  for (const auto& n : s.needles) {
    if (!n.selected) continue;
    const double r = std::max(n.radius, kMinNeedleMeshRadius);
    parts.push_back(needle_geometry(find_hole(holes, n.hole_id), n.depth, r, s.config.needle_sides).mesh);
  }
  return merge_meshes(parts);
}

SceneMesh scene_mesh(const SessionState& s, const std::string& kind) {
  SceneMesh out;
  out.pose = s.pose.value_or(RigidTransformd::identity());
  out.in_image_frame = s.pose.has_value();
  if (kind == "template") {
    out.mesh = template_mesh(s.config);
  } else if (kind == "obturator") {
    out.mesh = obturator_mesh(s.config);
  } else if (kind == "needles") {
    out.mesh = selected_needles(s);
  } else if (kind == "tumor") {
    if (!s.tumor_mesh) throw StageError("meshes", "no tumour set");
    out.mesh = *s.tumor_mesh;
    out.pose = RigidTransformd::identity();
    out.in_image_frame = true;
  } else {
    throw NotFound("unknown mesh '" + kind + "'");
  }
  return out;
}

}  // namespace

ApiServer::ApiServer(SessionStore& store, ServerOptions options)
    : store_(store), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ApiServer::~ApiServer() = default;

void ApiServer::install_routes() {
  auto& svr = *server_;
  if (options_.static_dir && !svr.set_mount_point("/", *options_.static_dir)) {
    throw InputError("static directory '" + *options_.static_dir + "' does not exist");
  }

  svr.Get("/healthz", guarded([](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}, {"version", BRACHY_VERSION}});
          }));

  svr.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
             const nlohmann::json body = parse_body(req);
             std::optional<TemplateConfig> config;
             if (body.is_object() && body.contains("template")) config = template_config_from_json(body["template"]);
             const std::string id = store_.create(config);
             ordered state = session_to_json(*store_.snapshot(id));
             state["status"] = "idle";
             send_json(res, 201, state);
           }));

  svr.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const auto snap = store_.snapshot(id);
            ordered state = session_to_json(*snap);
            const std::string running = store_.status(id);
            state["status"] = running.empty() ? "idle" : "running";
            state["running"] = running.empty() ? ordered(nullptr) : ordered(running);
            send_json(res, 200, state);
          }));

  svr.Post(R"(/sessions/([^/]+)/commands)", guarded([this](const httplib::Request& req, httplib::Response& res) {
             const std::string id = req.matches[1];
             const nlohmann::json body = parse_body(req);
             if (!body.is_object() || !body.contains("type") || !body["type"].is_string()) {
               throw InputError("command envelope needs a string 'type'");
             }
             if (!body.contains("revision") || !body["revision"].is_number_unsigned()) {
               throw InputError("command envelope needs a non-negative integer 'revision'");
             }
             const nlohmann::json payload = body.contains("payload") ? body["payload"] : nlohmann::json::object();
             const CommandOutcome out =
                 store_.command(id, body["revision"].get<std::uint64_t>(), body["type"].get<std::string>(), payload);
             send_json(res, 200, out.delta);
           }));

  svr.Get(R"(/sessions/([^/]+)/slice)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto snap = store_.snapshot(req.matches[1]);
            if (!snap->volume) throw StageError("slice", "no volume loaded");
            const GrayImage img = extract_slice(*snap->volume, query_axis(req), query_int(req, "index"),
                                                query_number(req, "window"), query_number(req, "level"));
            const auto png = encode_png(img);
            res.status = 200;
            res.set_content(std::string(png.begin(), png.end()), "image/png");
          }));

  svr.Get(R"(/sessions/([^/]+)/meshes/([a-z]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto snap = store_.snapshot(req.matches[1]);
            const SceneMesh sm = scene_mesh(*snap, req.matches[2]);
            ordered j = mesh_to_json(transform_mesh(sm.pose, sm.mesh));
            j["frame"] = sm.in_image_frame ? "image" : "model";
            send_json(res, 200, j);
          }));

  svr.Get(R"(/sessions/([^/]+)/contours)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto snap = store_.snapshot(req.matches[1]);
            if (!snap->volume) throw StageError("contours", "no volume loaded");
            if (!snap->pose) throw StageError("contours", "no pose yet");
            const PlaneAxis axis = query_axis(req);
            const int index = query_int(req, "index");
            extract_slice(*snap->volume, axis, index);  // validates the index
            const double offset = slice_offset(*snap->volume, axis, index);
            ordered items = ordered::array();
            std::vector<std::string> kinds = {"template", "obturator", "needles"};
            if (snap->tumor_mesh) kinds.push_back("tumor");
            for (const auto& kind : kinds) {
              const SceneMesh sm = scene_mesh(*snap, kind);
              ordered lines = ordered::array();
              for (const auto& pl : mesh_plane_contours(sm.mesh, sm.pose, axis, offset)) {
                ordered pts = ordered::array();
                for (const auto& p : pl.points) pts.push_back({p.x(), p.y()});
                lines.push_back({{"closed", pl.closed}, {"points", pts}});
              }
              items.push_back({{"object", kind}, {"polylines", lines}});
            }
            const auto [u, v] = in_plane_axes(axis);
            send_json(res, 200,
                      {{"axis", std::string(to_string(axis))},
                       {"index", index},
                       {"offset", offset},
                       {"plane_axes", {u, v}},
                       {"items", items}});
          }));

  svr.Get(R"(/sessions/([^/]+)/plan)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto snap = store_.snapshot(req.matches[1]);
            res.status = 200;
            res.set_content(export_plan(session_plan(*snap)), "application/json");
          }));
}

int ApiServer::bind() {
  int port = options_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(options_.host);
    if (port < 0) throw Error("bind", "cannot bind " + options_.host);
  } else if (!server_->bind_to_port(options_.host, port)) {
    throw Error("bind", "cannot bind " + options_.host + ":" + std::to_string(port));
  }
  options_.port = port;
  return port;
}

void ApiServer::run() { server_->listen_after_bind(); }

void ApiServer::stop() { server_->stop(); }

void serve(SessionStore& store, const ServerOptions& options) {
  // Block the signals before any thread starts so only the waiter sees them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  ApiServer server(store, options);
  const int port = server.bind();
  std::cerr << "listening on " << options.host << ":" << port << std::endl;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    std::cerr << "signal " << sig << ", shutting down" << std::endl;
    server.stop();
  });
  server.run();
  // run() returned without a signal (listener failure): wake the waiter.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
}

}  // namespace brachy
