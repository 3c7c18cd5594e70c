#include <CLI11.hpp>

#include "commands.hpp"

using namespace trackedit;

namespace {

struct Flags {
  std::string project, edit, out, checkpoint, mask, static_dir, config, host;
  std::uint64_t seed = 0;
  int tracks = 0, steps = 0, port = 0;
  std::vector<std::string> inputs;
  bool quiet = false;
};

struct Registered {
  CLI::App* app;
  std::vector<std::pair<std::string, CLI::Option*>> options;
};

Registered add_command(CLI::App& app, Flags& f, const std::string& name, const std::string& help,
                       const std::vector<std::string>& flags) {
  Registered r{app.add_subcommand(name, help), {}};
  auto add = [&](const std::string& key, CLI::Option* o) { r.options.emplace_back(key, o); };
  for (const std::string& k : flags) {
    if (k == "project") add(k, r.app->add_option("--project", f.project, "project directory"));
    if (k == "edit") add(k, r.app->add_option("--edit", f.edit, "editspec JSON"));
    if (k == "out") add(k, r.app->add_option("--out", f.out, "output directory"));
    if (k == "checkpoint") add(k, r.app->add_option("--checkpoint", f.checkpoint, "checkpoint stem (without .bin/.json)"));
    if (k == "mask") add(k, r.app->add_option("--mask", f.mask, "directory of mask PNGs (nonzero = included)"));
    if (k == "static") add(k, r.app->add_option("--static", f.static_dir, "UI bundle served at /"));
    if (k == "tracks") add(k, r.app->add_option("--tracks", f.tracks, "number of tracks")->check(CLI::PositiveNumber));
    if (k == "steps") add(k, r.app->add_option("--steps", f.steps, "sampling steps")->check(CLI::PositiveNumber));
    if (k == "port") add(k, r.app->add_option("--port", f.port, "TCP port (0 picks a free one)")->check(CLI::Range(0, 65535)));
    if (k == "host") add(k, r.app->add_option("--host", f.host, "bind address"));
  }
  add("seed", r.app->add_option("--seed", f.seed, "random seed (default 0)"));
  r.app->add_option("--config", f.config, "JSON config; flags win over its keys");
  r.app->add_flag("-q,--quiet", f.quiet, "no progress log on stderr");
  return r;
}

cli::RunConfig resolve(const Registered& r, const Flags& f) {
  cli::RunConfig rc;
  rc.subcommand = r.app->get_name();
  std::vector<std::string> given;
  for (const auto& [key, opt] : r.options)
    if (opt->count() > 0) given.push_back(key);
  auto is_given = [&](const char* k) { return std::find(given.begin(), given.end(), k) != given.end(); };
  if (is_given("project")) rc.project = f.project;
  if (is_given("edit")) rc.edit = f.edit;
  if (is_given("out")) rc.out = f.out;
  if (is_given("checkpoint")) rc.checkpoint = f.checkpoint;
  if (is_given("mask")) rc.mask = f.mask;
  if (is_given("static")) rc.static_dir = f.static_dir;
  if (is_given("tracks")) rc.tracks = f.tracks;
  if (is_given("steps")) rc.steps = f.steps;
  if (is_given("port")) rc.port = f.port;
  if (is_given("host")) rc.host = f.host;
  rc.seed = f.seed;
  rc.quiet = f.quiet;
  for (const std::string& s : f.inputs) rc.inputs.emplace_back(s);
  if (!f.config.empty()) cli::merge_config(rc, io::read_json(f.config), given, f.config);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Track-conditioned video motion editing toolkit"};
  app.set_version_flag("--version", TRACKEDIT_VERSION);
  app.require_subcommand(1);
  Flags f;
  std::vector<Registered> cmds = {
      add_command(app, f, "ingest", "validate a raw project and write a normalized copy", {"project", "out", "tracks"}),
      add_command(app, f, "edit", "apply an editspec to a project's tracks and cameras", {"project", "edit", "out"}),
      add_command(app, f, "preview", "render depth-warped preview frames of an edit", {"project", "edit", "out"}),
      add_command(app, f, "augment", "write a perturbed copy of a project", {"project", "out"}),
      add_command(app, f, "gen-toy", "write a procedural toy dataset", {"out", "tracks"}),
      add_command(app, f, "train-toy", "train the toy model", {"out", "tracks", "steps"}),
      add_command(app, f, "generate", "sample a clip from a trained checkpoint", {"project", "edit", "checkpoint", "out", "steps"}),
      add_command(app, f, "eval", "PSNR, SSIM and EPE between two clips", {"out", "mask", "project"}),
      add_command(app, f, "serve", "serve a project over HTTP", {"project", "port", "host", "static"}),
  };
  cmds[7].app->add_option("inputs", f.inputs, "clip directories A and B")->expected(2);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", {{"code", "InvalidArgument"}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  }
  try {
    for (const Registered& r : cmds) {
      if (!r.app->parsed()) continue;
      cli::RunConfig rc = resolve(r, f);
      if (rc.subcommand == "serve") return cli::cmd_serve(rc);
      cli::run(rc);
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << cli::error_line(e) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", "Internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
}
