// rtgrasp: command-line entry point for dataset build, splits, evaluation, template
// authoring, training-config export, the refinement service and terminal refinement.
//
// Exit codes: 0 success, 1 validation error (bad input, flags, config), 2 infrastructure
// error (endpoint, I/O).

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rtgrasp/eval.hpp"
#include "rtgrasp/mock_model.hpp"
#include "rtgrasp/model_client.hpp"
#include "rtgrasp/service.hpp"
#include "rtgrasp/templates.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rtgrasp;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kInfra = 2;

const fs::path kDataDir = RTGRASP_DATA_DIR;

void warn(const std::string& msg) { std::cerr << "rtgrasp: " << msg << '\n'; }

void write_text(const std::optional<fs::path>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    return;
  }
  if (path->has_parent_path()) fs::create_directories(path->parent_path());
  std::ofstream out(*path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path->string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path->string());
}

SplitMode split_mode_arg(const std::string& s) {
  auto m = parse_split_mode(s);
  if (!m) throw ValidationError("unknown split mode '" + s + "' (image-wise | object-wise)");
  return *m;
}

GraspPose pose_arg(const std::string& s) {
  const ParsedOutput p = parse_pose("{" + s + "}");
  if (!p.pose) throw ValidationError("cannot read pose '" + s + "'; expected x,y,theta");
  return *p.pose;
}

std::vector<std::string> load_script(const fs::path& path) {
  const json j = json::parse(detail::read_text(path));
  if (!j.is_array() || j.empty()) throw ValidationError("script " + path.string() + " must be a non-empty JSON array of strings");
  return j.get<std::vector<std::string>>();
}

// ---------------------------------------------------------------------------

struct BuildArgs {
  fs::path root, out;
  fs::path category_map = kDataDir / "category_map.seed.json";
  fs::path bank = kDataDir / "seed_bank.json";
  std::optional<fs::path> index;
  std::string variant = "full";
  int per_image = 86;
  int output_size = 224;
  bool no_augment = false;
  std::uint64_t seed = 0;
  std::optional<std::size_t> max_samples;
  bool allow_unreviewed = false;
};

int run_build(const BuildArgs& a) {
  const auto variant = parse_variant(a.variant);
  if (!variant) throw ValidationError("unknown variant '" + a.variant + "' (full | no-reasoning-a | no-reasoning-b)");
  const CategoryMap cmap = CategoryMap::load(a.category_map);
  const BankLoad bank = load_template_bank(a.bank, &cmap);
  for (const auto& w : bank.warnings) warn(w);
  LoadOptions lo;
  lo.index_path = a.index;
  lo.max_samples = a.max_samples.value_or(0);
  const LoadResult data = load_dataset(a.root, cmap, lo);
  for (const auto& w : data.warnings) warn(w);
  if (data.samples.empty()) throw ValidationError("no usable samples under " + a.root.string());

  AugmentationConfig cfg = a.no_augment ? AugmentationConfig::identity() : AugmentationConfig{};
  if (!a.no_augment) {
    cfg.per_image_count = a.per_image;
    cfg.output_size = a.output_size > 0 ? std::optional<int>(a.output_size) : std::nullopt;
  }
  cfg.seed = a.seed;
  BuildOptions bo;
  bo.strict = !a.allow_unreviewed;
  const BuildReport r = build_dataset(data.samples, cfg, bank.bank, *variant, a.out, bo);
  for (const auto& w : r.warnings) warn(w);
  std::cout << json{{"records", r.records},
                    {"planned", r.planned},
                    {"dropped_variants", r.dropped_variants},
                    {"source_images", data.samples.size()},
                    {"dropped_rects", data.dropped_rects},
                    {"jsonl", r.jsonl_path.string()},
                    {"images", r.images_dir.string()}}
                   .dump(2)
            << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct SplitArgs {
  std::optional<fs::path> root, dataset, index, out;
  fs::path category_map = kDataDir / "category_map.seed.json";
  std::string mode = "image-wise";
  int k = 5;
  std::uint64_t seed = 0;
};

int run_split(const SplitArgs& a) {
  const SplitMode mode = split_mode_arg(a.mode);
  FoldAssignment f;
  if (a.root) {
    LoadOptions lo;
    lo.index_path = a.index;
    const LoadResult data = load_dataset(*a.root, CategoryMap::load(a.category_map), lo);
    for (const auto& w : data.warnings) warn(w);
    f = split_folds(std::span<const CornellSample>(data.samples), mode, a.k, a.seed);
  } else if (a.dataset) {
    const auto records = load_records(*a.dataset);
    f = folds_for_records(records, mode, a.k, a.seed);
  } else {
    throw ValidationError("split needs --root or --dataset");
  }
  write_text(a.out, f.to_json().dump(2) + "\n");
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  fs::path dataset;
  std::string split = "image-wise";  // image-wise | object-wise | both
  int k = 5;
  std::uint64_t seed = 0;
  std::optional<fs::path> folds;
  int parallelism = 4;
  std::optional<std::size_t> limit;
  std::optional<fs::path> out;
  double iou = 0.25;
  double angle = 30.0;
};

int run_cross_validation(ModelClient& client, const EvalArgs& a) {
  auto records = load_records(a.dataset);
  if (a.limit && records.size() > *a.limit) records.resize(*a.limit);
  if (records.empty()) throw ValidationError("dataset " + a.dataset.string() + " has no records");
  const fs::path dir = a.dataset.has_parent_path() ? a.dataset.parent_path() : fs::path(".");

  std::vector<SplitMode> modes;
  std::optional<FoldAssignment> fixed;
  if (a.folds) {
    fixed = FoldAssignment::from_json(json::parse(detail::read_text(*a.folds)));
    modes = {fixed->mode};
  } else if (a.split == "both") {
    modes = {SplitMode::ImageWise, SplitMode::ObjectWise};
  } else {
    modes = {split_mode_arg(a.split)};
  }

  json report = json::object();
  std::optional<EvalSummary> iw, ow;
  std::size_t scored = 0, infra = 0;
  for (SplitMode m : modes) {
    CrossValidationOptions opt;
    opt.mode = m;
    opt.k = a.k;
    opt.seed = a.seed;
    opt.thresholds = {a.iou, a.angle};
    opt.parallelism = a.parallelism;
    opt.assignment = fixed;
    const CrossValidation cv = cross_validate(client, records, dir, opt);
    json folds = json::array();
    for (const auto& f : cv.folds) {
      folds.push_back(f.to_json());
      scored += f.scored();
      infra += f.infra_errors();
    }
    report[cv.summary.mode] = {{"summary", cv.summary.to_json()}, {"folds", std::move(folds)}};
    (m == SplitMode::ImageWise ? iw : ow) = cv.summary;
  }
  std::cout << format_table({{client.model_id(), {iw ? &*iw : nullptr, ow ? &*ow : nullptr}}});
  for (const auto* s : {iw ? &*iw : nullptr, ow ? &*ow : nullptr}) {
    if (!s) continue;
    std::cout << s->mode << " fold accuracies:";
    for (double acc : s->fold_accuracies) std::cout << ' ' << acc;
    std::cout << "  mean " << s->mean << "  std " << s->sample_std << '\n';
  }
  if (a.out) write_text(a.out, report.dump(2) + "\n");
  if (infra) warn(std::to_string(infra) + " request(s) failed at the endpoint and were excluded from accuracy");
  return scored == 0 && infra > 0 ? kInfra : kOk;
}

struct MockEvalArgs {
  EvalArgs eval;
  std::string mode;
  std::string pose = "0.5,0.5,0";
  std::optional<fs::path> script;
};

std::unique_ptr<ModelClient> make_mock(const std::string& mode, const std::optional<fs::path>& dataset,
                                       const std::string& pose, const std::optional<fs::path>& script) {
  if (mode == "oracle") {
    if (!dataset) throw ValidationError("oracle mock needs a dataset");
    std::map<std::string, GraspPose> poses;
    for (const auto& r : load_records(*dataset)) poses[r.id] = r.pose;
    return std::make_unique<OracleMock>(std::move(poses));
  }
  if (mode == "constant") return std::make_unique<ConstantMock>(pose_arg(pose));
  if (mode == "gibberish") return std::make_unique<GibberishMock>();
  if (mode == "scripted") {
    if (!script) throw ValidationError("scripted mock needs --script");
    return std::make_unique<ScriptedMock>(load_script(*script));
  }
  throw ValidationError("unknown mock mode '" + mode + "' (oracle | constant | gibberish | scripted)");
}

// ---------------------------------------------------------------------------

struct TemplatesGenArgs {
  std::vector<std::string> categories;
  fs::path category_map = kDataDir / "category_map.seed.json";
  std::optional<fs::path> bank;
  fs::path out;
  int per_category = 5;
  std::uint64_t seed = 0;
};

int run_templates_generate(const TemplatesGenArgs& a) {
  const EndpointConfig ep = EndpointConfig::from_env();
  std::vector<std::string> cats = a.categories;
  if (cats.empty()) {
    for (const auto& c : CategoryMap::load(a.category_map).categories()) cats.push_back(c);
  }
  TemplateBank base;
  if (a.bank) {
    base = TemplateBank::from_json(json::parse(detail::read_text(*a.bank)));
  } else {
    base.instructions = load_template_bank(kDataDir / "seed_bank.json").bank.instructions;
  }
  HttpModelClient client(ep);
  AuthoringOptions opt;
  opt.per_category = a.per_category;
  opt.draft_path = a.out;
  const AuthoringResult r = author_templates(client, cats, std::move(base), opt);
  for (const auto& line : r.checklist) std::cout << line << '\n';
  std::cout << "Drafts written to " << a.out.string()
            << " with status UNREVIEWED. Set \"reviewed\": true on each template after checking it.\n";
  if (!r.complete) {
    for (const auto& [cat, st] : r.status) {
      if (st != "refined") warn(cat + ": " + st);
    }
    return kInfra;
  }
  return kOk;
}

struct TemplatesLintArgs {
  fs::path bank;
  fs::path category_map = kDataDir / "category_map.seed.json";
  bool strict = false;
};

int run_templates_lint(const TemplatesLintArgs& a) {
  const CategoryMap cmap = CategoryMap::load(a.category_map);
  const BankLoad b = load_template_bank(a.bank, &cmap);
  for (const auto& w : b.warnings) warn(w);
  std::cout << json{{"covered", b.coverage.covered},
                    {"via_fallback", b.coverage.via_fallback},
                    {"instructions", b.bank.instructions.size()},
                    {"unreviewed", b.bank.unreviewed_count()},
                    {"status", b.bank.fully_reviewed() ? "REVIEWED" : "UNREVIEWED"}}
                   .dump(2)
            << '\n';
  if (a.strict && !b.bank.fully_reviewed()) {
    warn("bank has unreviewed templates");
    return kValidation;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::optional<fs::path> dataset, image_root, folds, static_dir;
  std::string split = "image-wise";
  int k = 5;
  std::uint64_t seed = 0;
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path sessions = "sessions";
  double overlay_width = 150.0, overlay_plate = 60.0;
  std::optional<std::string> mock;
  std::string pose = "0.5,0.5,0";
  std::optional<fs::path> script;
};

int run_serve(ServeArgs a) {
  if (!a.image_root) {
    if (const char* env = std::getenv("RTG_IMAGE_ROOT"); env && *env) a.image_root = fs::path(env);
  }
  if (!a.dataset && !a.image_root) throw ValidationError("serve needs --dataset or --image-root (or RTG_IMAGE_ROOT)");
  std::shared_ptr<ModelClient> client;
  if (a.mock) {
    client = make_mock(*a.mock, a.dataset, a.pose, a.script);
  } else {
    client = std::make_shared<HttpModelClient>(EndpointConfig::from_env());
  }
  ServiceConfig cfg;
  cfg.dataset = a.dataset;
  cfg.image_root = a.image_root;
  cfg.folds = a.folds;
  cfg.split_mode = split_mode_arg(a.split);
  cfg.k = a.k;
  cfg.seed = a.seed;
  cfg.session_dir = a.sessions;
  cfg.static_dir = a.static_dir;
  cfg.overlay_width = a.overlay_width;
  cfg.overlay_plate = a.overlay_plate;
  GraspService service(cfg, client);
  httplib::Server srv;
  service.mount(srv);
  srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    std::cerr << req.method << ' ' << req.path << ' ' << res.status << '\n';
  });
  std::cerr << "rtgrasp: serving " << service.samples().size() << " sample(s) on http://" << a.host << ':' << a.port
            << " with model " << client->model_id() << '\n';
  if (!srv.listen(a.host, a.port)) throw std::runtime_error("cannot listen on " + a.host + ":" + std::to_string(a.port));
  return kOk;
}

// ---------------------------------------------------------------------------

struct RefineArgs {
  std::optional<fs::path> image, dataset;
  std::optional<std::string> id;
  std::string instruction = std::string(kDefaultInstruction);
  std::optional<fs::path> sessions;
  std::optional<fs::path> script;
};

void print_turn(const SessionTurn& t) {
  std::cout << "model> " << t.text << '\n';
  if (t.parsed && t.parsed->pose) {
    std::cout << "pose:  " << render_pose_text(*t.parsed->pose) << '\n';
  } else {
    std::cout << "pose:  (none";
    if (t.parsed && !t.parsed->diagnostics.empty()) std::cout << "; " << t.parsed->diagnostics.back();
    std::cout << ")\n";
  }
}

int run_refine(const RefineArgs& a) {
  std::unique_ptr<ModelClient> client;
  if (a.script) {
    client = std::make_unique<ScriptedMock>(load_script(*a.script));
  } else {
    client = std::make_unique<HttpModelClient>(EndpointConfig::from_env());
  }
  fs::path image_path;
  std::string image_id;
  std::string instruction = a.instruction;
  if (a.image) {
    image_path = *a.image;
    image_id = a.image->stem().string();
  } else if (a.dataset && a.id) {
    const fs::path dir = a.dataset->has_parent_path() ? a.dataset->parent_path() : fs::path(".");
    for (const auto& r : load_records(*a.dataset)) {
      if (r.id == *a.id) {
        image_path = dir / r.image;
        image_id = r.id;
        instruction = r.instruction;
      }
    }
    if (image_id.empty()) throw ValidationError("record " + *a.id + " not found in " + a.dataset->string());
  } else {
    throw ValidationError("refine needs --image, or --dataset with --id");
  }
  const auto image = read_file_bytes(image_path);
  png_size(image);
  std::optional<SessionStore> store;
  if (a.sessions) store.emplace(*a.sessions);

  std::cout << "user>  " << instruction << '\n';
  RefinementSession session = start_session(*client, image_id, image, instruction);
  if (store) store->sync(session);
  print_turn(session.turns.back());
  std::string line;
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    if (line == "/quit" || line == "/exit") break;
    if (detail::trim(line).empty()) continue;
    try {
      auto [raw, next] = refine(*client, session, image, line);
      session = std::move(next);
      if (store) store->sync(session);
      print_turn(session.turns.back());
    } catch (const TransportError& e) {
      warn(std::string("endpoint failed, session unchanged: ") + e.what());
    }
  }
  std::cout << "\nsession " << session.session_id << ": " << session.assistant_turns() << " answer(s)\n";
  return kOk;
}

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const TransportError& e) {
    warn(std::string("endpoint error: ") + e.what());
    return kInfra;
  } catch (const IngestError& e) {
    warn(e.what());
    return kInfra;
  } catch (const fs::filesystem_error& e) {
    warn(e.what());
    return kInfra;
  } catch (const ValidationError& e) {
    warn(e.what());
    return kValidation;
  } catch (const FormatError& e) {
    warn(e.what());
    return kValidation;
  } catch (const std::logic_error& e) {  // contract errors, bad numeric arguments
    warn(e.what());
    return kValidation;
  } catch (const json::exception& e) {
    warn(std::string("malformed JSON: ") + e.what());
    return kValidation;
  } catch (const std::exception& e) {
    warn(e.what());
    return kInfra;
  }
}

void add_eval_options(CLI::App* cmd, EvalArgs& e) {
  cmd->add_option("--dataset", e.dataset, "Dataset JSONL from build-dataset")->required();
  cmd->add_option("--split", e.split, "image-wise | object-wise | both")->capture_default_str();
  cmd->add_option("--k", e.k, "Number of folds")->capture_default_str();
  cmd->add_option("--seed", e.seed, "Fold seed")->capture_default_str();
  cmd->add_option("--folds", e.folds, "FoldAssignment JSON from `split` (overrides --split/--k/--seed)");
  cmd->add_option("--parallelism", e.parallelism, "Requests in flight")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--limit", e.limit, "Evaluate only the first N records");
  cmd->add_option("--out", e.out, "Write per-fold reports and summaries as JSON");
  cmd->add_option("--iou", e.iou, "IoU threshold (strict)")->capture_default_str();
  cmd->add_option("--angle", e.angle, "Angle threshold in degrees (strict)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reasoning-tuned grasp dataset, evaluation and refinement tools"};
  app.name("rtgrasp");
  app.require_subcommand(1);

  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build-dataset", "Ingest Cornell, augment and write the image-text dataset");
  build_cmd->add_option("--root", build.root, "Cornell dataset root")->required()->check(CLI::ExistingDirectory);
  build_cmd->add_option("--out", build.out, "Output JSONL path; images go to <dir>/images")->required();
  build_cmd->add_option("--category-map", build.category_map, "Category map JSON")->capture_default_str();
  build_cmd->add_option("--bank", build.bank, "Template bank JSON")->capture_default_str();
  build_cmd->add_option("--index", build.index, "Object index file (default: z.txt files under the root)");
  build_cmd->add_option("--variant", build.variant, "full | no-reasoning-a | no-reasoning-b")->capture_default_str();
  build_cmd->add_option("--per-image", build.per_image, "Augmented variants per image")->capture_default_str();
  build_cmd->add_option("--output-size", build.output_size, "Square crop side; 0 keeps the full frame")->capture_default_str();
  build_cmd->add_flag("--no-augment", build.no_augment, "One identity variant per image");
  build_cmd->add_option("--seed", build.seed, "Augmentation and template seed")->capture_default_str();
  build_cmd->add_option("--max-samples", build.max_samples, "Use only the first N images");
  build_cmd->add_flag("--allow-unreviewed", build.allow_unreviewed, "Accept templates not yet marked reviewed");

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "Compute k-fold image-wise or object-wise splits");
  split_cmd->add_option("--root", split.root, "Cornell dataset root")->check(CLI::ExistingDirectory);
  split_cmd->add_option("--dataset", split.dataset, "Dataset JSONL (folds over its source images)");
  split_cmd->add_option("--index", split.index, "Object index file");
  split_cmd->add_option("--category-map", split.category_map, "Category map JSON")->capture_default_str();
  split_cmd->add_option("--mode", split.mode, "image-wise | object-wise")->capture_default_str();
  split_cmd->add_option("--k", split.k, "Number of folds")->capture_default_str();
  split_cmd->add_option("--seed", split.seed, "Shuffle seed")->capture_default_str();
  split_cmd->add_option("--out", split.out, "Write JSON here instead of stdout");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a live endpoint (RTG_ENDPOINT_URL, RTG_MODEL_NAME, RTG_API_KEY)");
  add_eval_options(eval_cmd, eval);

  MockEvalArgs mock;
  auto* mock_cmd = app.add_subcommand("mock-eval", "Evaluate a built-in mock model");
  add_eval_options(mock_cmd, mock.eval);
  mock_cmd->add_option("--mode", mock.mode, "oracle | constant | gibberish | scripted")->required();
  mock_cmd->add_option("--pose", mock.pose, "Pose for the constant mock, x,y,theta")->capture_default_str();
  mock_cmd->add_option("--script", mock.script, "JSON array of replies for the scripted mock");

  auto* templates_cmd = app.add_subcommand("templates", "Author or lint reasoning template banks");
  templates_cmd->require_subcommand(1);
  TemplatesGenArgs gen;
  auto* gen_cmd = templates_cmd->add_subcommand("generate", "Draft and refine templates with the configured endpoint");
  gen_cmd->add_option("--categories", gen.categories, "Categories (default: all in the category map)")->delimiter(',');
  gen_cmd->add_option("--category-map", gen.category_map, "Category map JSON")->capture_default_str();
  gen_cmd->add_option("--bank", gen.bank, "Existing bank to extend");
  gen_cmd->add_option("--out", gen.out, "Draft bank output path")->required();
  gen_cmd->add_option("--per-category", gen.per_category, "Drafts requested per category")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Recorded for provenance; decoding uses temperature 0")->capture_default_str();
  TemplatesLintArgs lint;
  auto* lint_cmd = templates_cmd->add_subcommand("lint", "Validate a bank and report category coverage");
  lint_cmd->add_option("--bank", lint.bank, "Template bank JSON")->required();
  lint_cmd->add_option("--category-map", lint.category_map, "Category map JSON")->capture_default_str();
  lint_cmd->add_flag("--strict", lint.strict, "Fail when any template is unreviewed");

  std::string strategy;
  std::optional<fs::path> train_out;
  auto* train_cmd = app.add_subcommand("export-train-config", "Write the reference fine-tuning hyperparameters");
  train_cmd->add_option("--strategy", strategy, "pretraining | lora")->required();
  train_cmd->add_option("--out", train_out, "Output JSON (default stdout)");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the prediction and refinement service");
  serve_cmd->add_option("--dataset", serve.dataset, "Dataset JSONL to expose");
  serve_cmd->add_option("--image-root", serve.image_root, "Directory of extra PNGs (default RTG_IMAGE_ROOT)");
  serve_cmd->add_option("--folds", serve.folds, "FoldAssignment JSON for /api/samples?fold=");
  serve_cmd->add_option("--split", serve.split, "Split mode when folds are derived")->capture_default_str();
  serve_cmd->add_option("--k", serve.k, "Folds when derived")->capture_default_str();
  serve_cmd->add_option("--seed", serve.seed, "Fold seed when derived")->capture_default_str();
  serve_cmd->add_option("--host", serve.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", serve.port, "Port")->capture_default_str();
  serve_cmd->add_option("--sessions", serve.sessions, "Session store directory")->capture_default_str();
  serve_cmd->add_option("--static", serve.static_dir, "Serve a built UI from this directory at /");
  serve_cmd->add_option("--overlay-width", serve.overlay_width, "Overlay rectangle width, pixels")->capture_default_str();
  serve_cmd->add_option("--overlay-plate", serve.overlay_plate, "Overlay plate length, pixels")->capture_default_str();
  serve_cmd->add_option("--mock", serve.mock, "Use a mock model: oracle | constant | gibberish | scripted");
  serve_cmd->add_option("--pose", serve.pose, "Pose for the constant mock")->capture_default_str();
  serve_cmd->add_option("--script", serve.script, "Replies for the scripted mock");

  RefineArgs ref;
  auto* refine_cmd = app.add_subcommand("refine", "Interactive refinement chat in the terminal");
  refine_cmd->add_option("--image", ref.image, "PNG to discuss")->check(CLI::ExistingFile);
  refine_cmd->add_option("--dataset", ref.dataset, "Dataset JSONL");
  refine_cmd->add_option("--id", ref.id, "Record id within --dataset");
  refine_cmd->add_option("--instruction", ref.instruction, "Opening instruction")->capture_default_str();
  refine_cmd->add_option("--sessions", ref.sessions, "Persist the session in this directory");
  refine_cmd->add_option("--script", ref.script, "Replay these replies instead of calling an endpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "rtgrasp: " << e.what() << "\n\n";
    const CLI::App* active = &app;
    for (auto* sub = active->get_subcommands().empty() ? nullptr : active->get_subcommands().front(); sub;
         sub = sub->get_subcommands().empty() ? nullptr : sub->get_subcommands().front()) {
      active = sub;
    }
    std::cerr << active->help();
    return kValidation;
  }

  if (*build_cmd) return guarded([&] { return run_build(build); });
  if (*split_cmd) return guarded([&] { return run_split(split); });
  if (*eval_cmd) {
    return guarded([&] {
      const EndpointConfig ep = EndpointConfig::from_env();
      std::cerr << "rtgrasp: evaluating " << ep.model_name << " at " << ep.base_url << '\n';
      HttpModelClient client(ep);
      return run_cross_validation(client, eval);
    });
  }
  if (*mock_cmd) {
    return guarded([&] {
      auto client = make_mock(mock.mode, mock.eval.dataset, mock.pose, mock.script);
      return run_cross_validation(*client, mock.eval);
    });
  }
  if (*gen_cmd) return guarded([&] { return run_templates_generate(gen); });
  if (*lint_cmd) return guarded([&] { return run_templates_lint(lint); });
  if (*train_cmd) {
    return guarded([&] {
      const auto s = parse_strategy(strategy);
      if (!s) throw ValidationError("unknown strategy '" + strategy + "' (pretraining | lora)");
      write_text(train_out, training_config(*s).to_json().dump(2) + "\n");
      return kOk;
    });
  }
  if (*serve_cmd) return guarded([&] { return run_serve(serve); });
  if (*refine_cmd) return guarded([&] { return run_refine(ref); });
  return kValidation;
}
