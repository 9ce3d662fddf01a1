#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "dualcam/analysis.hpp"
#include "dualcam/checkpoint.hpp"
#include "dualcam/config.hpp"
#include "dualcam/dataset.hpp"
#include "dualcam/diffusion.hpp"
#include "dualcam/image_io.hpp"
#include "dualcam/pipeline.hpp"
#include "dualcam/trainer.hpp"

namespace fs = std::filesystem;
using namespace dcam;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

config::RunConfig resolve_config(const CommonArgs& args) {
    config::RunConfig cfg;
    if (!args.config_path.empty()) cfg = config::parse_config_file(args.config_path);
    for (const std::string& o : args.overrides) config::apply_override(cfg, o);
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "configuration file");
    cmd->add_option("--set", args.overrides, "override: section.key=value")->take_all();
}

void write_resolved(const config::RunConfig& cfg, const std::string& dir) {
    std::ofstream out(fs::path(dir) / "resolved.cfg", std::ios::binary);
    if (!out) throw IoError("cannot write resolved config in " + dir);
    out << config::resolved_config(cfg);
}

codec::CodecConfig codec_config(const config::RunConfig& cfg) {
    codec::CodecConfig cc;
    if (cfg.codec_mode == "lossless")
        cc.mode = codec::CodecMode::lossless;
    else if (cfg.codec_mode == "shape_faithful")
        cc.mode = codec::CodecMode::shape_faithful;
    else
        throw ConfigError("unknown codec mode: " + cfg.codec_mode);
    cc.channels = cfg.codec_channels;
    cc.projection_seed = cfg.projection_seed;
    return cc;
}

std::vector<int> parse_layer_range(const std::string& text) {
    if (text == "none") return {};
    std::vector<int> out;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        size_t dash = part.find('-');
        if (dash == std::string::npos) {
            out.push_back(std::stoi(part));
        } else {
            int a = std::stoi(part.substr(0, dash));
            int b = std::stoi(part.substr(dash + 1));
            for (int k = a; k <= b; ++k) out.push_back(k);
        }
    }
    return out;
}

dit::ModelConfig model_config(const config::RunConfig& cfg) {
    dit::ModelConfig mc;
    if (cfg.profile == "mini")
        mc = dit::ModelConfig::mini();
    else if (cfg.profile != "default")
        throw ConfigError("unknown model profile: " + cfg.profile);
    mc.latent_channels = cfg.codec_channels;
    mc.dual = !cfg.no_depth;
    return mc;
}

dit::SigmaSchedule sigma_schedule(const config::RunConfig& cfg, int num_blocks) {
    dit::SigmaSchedule s = dit::SigmaSchedule::defaults(num_blocks);
    if (cfg.rgb_to_depth != "auto") s.rgb_to_depth = parse_layer_range(cfg.rgb_to_depth);
    if (cfg.depth_to_rgb != "auto") s.depth_to_rgb = parse_layer_range(cfg.depth_to_rgb);
    return s;
}

dit::DualDit load_model(const config::RunConfig& cfg, const std::string& checkpoint) {
    dit::ModelConfig mc = model_config(cfg);
    dit::DualDit model(mc, sigma_schedule(cfg, mc.num_blocks));
    nn::load_checkpoint(model.params, checkpoint);
    for (const auto& e : model.params.entries)
        if (e.name.rfind("fusion.", 0) == 0) {
            model.has_fusion = true;
            break;
        }
    return model;
}

train::TrainConfig train_config(const config::RunConfig& cfg) {
    train::TrainConfig tc;
    tc.batch = cfg.batch;
    tc.lr = cfg.lr;
    tc.lambda = cfg.lambda;
    tc.beta1 = cfg.beta1;
    tc.beta2 = cfg.beta2;
    tc.adam_eps = cfg.adam_eps;
    tc.seed = cfg.seed;
    tc.stage1_steps = cfg.stage1_steps;
    tc.stage2_steps = cfg.stage2_steps;
    tc.checkpoint_every = cfg.checkpoint_every;
    return tc;
}

diffusion::TimestepSchedule sample_schedule(const config::RunConfig& cfg) {
    if (!cfg.staged) return diffusion::uniform_schedule(cfg.sample_steps);
    return diffusion::build_timestep_schedule(cfg.base_steps, cfg.delta,
                                              diffusion::stage_from_name(cfg.delta_stage));
}

void write_video_frames(const codec::VideoTensor& video, const std::string& dir,
                        const char* pattern) {
    const int T = static_cast<int>(video.frames());
    const int H = static_cast<int>(video.height()), W = static_cast<int>(video.width());
    std::vector<uint8_t> rgb8(static_cast<size_t>(H) * W * 3);
    for (int t = 0; t < T; ++t) {
        for (int j = 0; j < H; ++j)
            for (int i = 0; i < W; ++i)
                for (int c = 0; c < 3; ++c) {
                    double v = std::clamp(video.data.at(t, c, j, i), -1.0, 1.0);
                    rgb8[(static_cast<size_t>(j) * W + i) * 3 + static_cast<size_t>(c)] =
                        static_cast<uint8_t>(std::lround((v + 1.0) * 0.5 * 255.0));
                }
        char name[48];
        std::snprintf(name, sizeof name, pattern, t);
        imageio::write_png_rgb8((fs::path(dir) / name).string(), W, H, rgb8);
    }
}

// ---- subcommands ------------------------------------------------------------

int cmd_render_data(const CommonArgs& common, const std::string& out_flag) {
    config::RunConfig cfg = resolve_config(common);
    std::string root = out_flag.empty() ? cfg.data_root : out_flag;
    cfg.data_root = root;
    scene::make_dataset(root, cfg.clips, cfg.frames, cfg.height, cfg.width, cfg.seed);
    write_resolved(cfg, root);
    std::cout << (fs::path(root) / "manifest.txt").string() << "\n";
    return 0;
}

int cmd_train(const CommonArgs& common, int stage, const std::string& out_dir,
              const std::string& init_checkpoint, const std::string& resume_path) {
    config::RunConfig cfg = resolve_config(common);
    if (stage != 1 && stage != 2) throw ConfigError("--stage must be 1 or 2");
    if (stage == 2 && init_checkpoint.empty() && resume_path.empty())
        throw ConfigError("stage 2 requires a stage-1 checkpoint (--checkpoint)");

    fs::create_directories(out_dir);
    write_resolved(cfg, out_dir);

    codec::Codec cdc(codec_config(cfg));
    data::Dataset ds = data::load_dataset(cfg.data_root, cdc);

    dit::ModelConfig mc = model_config(cfg);
    dit::DualDit model(mc, sigma_schedule(cfg, mc.num_blocks));

    train::TrainConfig tc = train_config(cfg);
    const long stage_steps = stage == 1 ? tc.stage1_steps : tc.stage2_steps;
    const long first_step = stage == 1 ? 0 : tc.stage1_steps;
    long done = 0;  // completed steps within this stage

    if (!resume_path.empty()) {
        done = nn::load_trainer_state(model.params, resume_path);
        for (const auto& e : model.params.entries)
            if (e.name.rfind("fusion.", 0) == 0) {
                model.has_fusion = true;
                break;
            }
        if (stage == 2 && !model.has_fusion)
            throw ConfigError("resume state has no fusion parameters for stage 2");
    } else if (stage == 1) {
        model.init_params(cfg.seed);
    } else {
        nn::load_checkpoint(model.params, init_checkpoint);
        // Stage 2 adds zero-initialized fusion blocks on top of stage 1.
        model.add_fusion_params(cfg.seed);
    }

    train::Trainer trainer(model, ds, tc);
    trainer.adam_steps = done;

    std::string csv_path =
        (fs::path(out_dir) / ("train_stage" + std::to_string(stage) + ".csv")).string();
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw IoError("cannot write training log: " + csv_path);
    csv << train::log_header() << "\n";

    const std::string resolved = config::resolved_config(cfg);
    const std::string last_ckpt = (fs::path(out_dir) / "last.ckpt").string();
    const std::string last_state = (fs::path(out_dir) / "last.state").string();
    auto stage_kind = stage == 1 ? train::StageKind::decoupled : train::StageKind::fusion;

    trainer.run(stage_kind, first_step + done, stage_steps - done,
                [&](const train::StepRecord& rec) {
                    csv << train::log_row(rec) << "\n";
                    long local = rec.step - first_step + 1;
                    if (tc.checkpoint_every > 0 && local % tc.checkpoint_every == 0) {
                        nn::save_checkpoint(model.params, last_ckpt, resolved);
                        nn::save_trainer_state(model.params, local, last_state);
                    }
                });

    std::string final_ckpt =
        (fs::path(out_dir) / ("stage" + std::to_string(stage) + ".ckpt")).string();
    nn::save_checkpoint(model.params, final_ckpt, resolved);
    nn::save_trainer_state(model.params, stage_steps,
                           (fs::path(out_dir) / ("stage" + std::to_string(stage) + ".state"))
                               .string());
    std::cout << final_ckpt << "\n";
    return 0;
}

int cmd_sample(const CommonArgs& common, const std::string& checkpoint,
               const std::string& trajectory, const std::string& image,
               const std::string& depth_image, const std::string& descriptor_flag,
               const std::string& out_dir) {
    config::RunConfig cfg = resolve_config(common);
    fs::create_directories(out_dir);

    dit::DualDit model = load_model(cfg, checkpoint);
    codec::Codec cdc(codec_config(cfg));

    geom::CameraTrajectory traj = geom::parse_trajectory_file(trajectory);
    if (traj.frame_count() != cfg.frames)
        throw ShapeError("trajectory has " + std::to_string(traj.frame_count()) +
                         " frames but the configuration expects " + std::to_string(cfg.frames));
    const int H = cfg.height, W = cfg.width;
    const int Tp = static_cast<int>(codec::latent_frames(cfg.frames));
    const long h = H / codec::kSpatialFactor, w = W / codec::kSpatialFactor;

    pipeline::Conditions cond;
    cond.grid = {Tp, h, w};
    cond.rays_grouped = data::grouped_rays(traj, H, W);
    cond.descriptor_id = scene::descriptor_id(
        descriptor_flag.empty() ? cfg.descriptor : descriptor_flag);

    if (!image.empty()) {
        imageio::ImageRgb8 img = imageio::read_png_rgb8(image);
        if (img.width != W || img.height != H)
            throw ShapeError("conditioning image must be " + std::to_string(W) + "x" +
                             std::to_string(H));
        codec::VideoTensor frame;
        frame.data = Tensor({1, 3, H, W});
        for (int j = 0; j < H; ++j)
            for (int i = 0; i < W; ++i)
                for (int c = 0; c < 3; ++c)
                    frame.data.at(0, c, j, i) =
                        2.0 * img.pixels[(static_cast<size_t>(j) * W + i) * 3 +
                                         static_cast<size_t>(c)] / 255.0 - 1.0;
        cond.cond_rgb_tokens =
            data::to_tokens(codec::prepare_condition(cdc.encode(frame), Tp));
        if (!depth_image.empty()) {
            imageio::ImageGray16 dimg = imageio::read_png_gray16(depth_image);
            if (dimg.width != W || dimg.height != H)
                throw ShapeError("conditioning depth must match the image resolution");
            Tensor d({1, 1, H, W});
            for (int j = 0; j < H; ++j)
                for (int i = 0; i < W; ++i)
                    d.at(0, 0, j, i) = dimg.pixels[static_cast<size_t>(j) * W + i];
            cond.cond_depth_tokens = data::to_tokens(
                codec::prepare_condition(cdc.encode(codec::replicate_depth(d)), Tp));
        } else {
            cond.cond_depth_tokens = TensorF({Tp * h * w, (long)model.cfg.latent_channels});
        }
    } else {
        // T2V: only the descriptor embedding conditions generation.
        cond.cond_rgb_tokens = TensorF({Tp * h * w, (long)model.cfg.latent_channels});
        cond.cond_depth_tokens = cond.cond_rgb_tokens;
    }

    auto schedule = sample_schedule(cfg);
    auto latents = pipeline::generate(model, cond, schedule, cfg.seed, model.has_fusion);

    codec::VideoTensor rgb = cdc.decode(latents.rgb);
    write_video_frames(rgb, out_dir, "rgb_%04d.png");

    double dmin = 0, dmax = 0;
    if (model.cfg.dual) {
        codec::VideoTensor depth3 = cdc.decode(latents.depth, codec::VideoKind::depth3);
        Tensor depth = pipeline::collapse_depth(depth3);
        dmin = depth[0];
        dmax = depth[0];
        for (double v : depth.data) {
            dmin = std::min(dmin, v);
            dmax = std::max(dmax, v);
        }
        const double span = dmax > dmin ? dmax - dmin : 1.0;
        std::vector<uint16_t> d16(static_cast<size_t>(H) * W);
        for (int t = 0; t < cfg.frames; ++t) {
            for (int j = 0; j < H; ++j)
                for (int i = 0; i < W; ++i)
                    d16[static_cast<size_t>(j) * W + i] = static_cast<uint16_t>(
                        std::lround((depth.at(t, 0, j, i) - dmin) / span * 65535.0));
            char name[48];
            std::snprintf(name, sizeof name, "depth_%04d.png", t);
            imageio::write_png_gray16((fs::path(out_dir) / name).string(), W, H, d16);
        }
    }

    geom::write_trajectory_file(traj, (fs::path(out_dir) / "trajectory.txt").string());
    {
        std::ofstream info(fs::path(out_dir) / "sample_info.txt", std::ios::binary);
        if (!info) throw IoError("cannot write sample sidecar in " + out_dir);
        info << "# " << config::kToolVersion << "\nseed " << cfg.seed << "\nmode "
             << (image.empty() ? "t2v" : "i2v") << "\nsteps " << schedule.timesteps.size()
             << "\n";
        char buf[96];
        std::snprintf(buf, sizeof buf, "depth_range %.17g %.17g\n", dmin, dmax);
        info << buf;
        for (size_t k = 0; k < schedule.timesteps.size(); ++k) {
            std::snprintf(buf, sizeof buf, "t %.17g %s\n", schedule.timesteps[k],
                          diffusion::stage_name(schedule.stages[k]));
            info << buf;
        }
    }
    write_resolved(cfg, out_dir);
    std::cout << out_dir << "\n";
    return 0;
}

int cmd_eval_pose(const std::string& gt_path, const std::string& pred_path) {
    geom::CameraTrajectory gt = geom::parse_trajectory_file(gt_path);
    geom::CameraTrajectory pred = geom::parse_trajectory_file(pred_path);
    double re = geom::rotation_error_deg(gt, pred);
    double te = geom::translation_error(gt, pred);
    std::printf("RE=%.2f TE=%.4f\n", re, te);
    return 0;
}

int cmd_analyze(const CommonArgs& common, const std::string& checkpoint,
                const std::string& mode, const std::string& out_dir) {
    config::RunConfig cfg = resolve_config(common);
    fs::create_directories(out_dir);

    dit::DualDit model = load_model(cfg, checkpoint);
    codec::Codec cdc(codec_config(cfg));

    if (mode == "cka") {
        data::Dataset ds = data::load_dataset(cfg.data_root, cdc);
        auto schedule = diffusion::build_timestep_schedule(cfg.base_steps, 0);
        analysis::cka_vs_stage_report(model, ds, schedule, cfg.probe_clips, cfg.seed,
                                      model.has_fusion, out_dir, cfg.plots);
    } else if (mode == "schedule") {
        data::Dataset holdout = data::load_dataset(cfg.holdout_root, cdc);
        std::vector<int> deltas;
        for (int v : parse_layer_range(cfg.deltas)) deltas.push_back(v);
        std::vector<diffusion::Stage> stages;
        {
            std::istringstream in(cfg.sweep_stages);
            std::string part;
            while (std::getline(in, part, ','))
                if (auto s = diffusion::stage_from_name(part)) stages.push_back(*s);
        }
        auto rows = analysis::stage_allocation_sweep(model, holdout, cdc, cfg.base_steps, deltas,
                                                     stages, cfg.sweep_seeds, cfg.seed,
                                                     model.has_fusion);
        std::ofstream out(fs::path(out_dir) / "schedule_sweep.csv", std::ios::binary);
        if (!out) throw IoError("cannot write sweep csv in " + out_dir);
        out << analysis::sweep_csv(rows);
    } else {
        throw ConfigError("--mode must be cka or schedule");
    }
    write_resolved(cfg, out_dir);
    std::cout << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dualcam: dual-branch camera-conditioned video diffusion toolkit"};
    app.require_subcommand(1);

    CommonArgs render_args, train_args, sample_args, analyze_args;
    std::string render_out;
    auto* render = app.add_subcommand("render-data", "render a synthetic dataset");
    add_common(render, render_args);
    render->add_option("--out", render_out, "dataset root (overrides dataset.root)");

    int train_stage = 1;
    std::string train_out = "runs/train", train_ckpt, train_resume;
    auto* train_cmd = app.add_subcommand("train", "run one training stage");
    add_common(train_cmd, train_args);
    train_cmd->add_option("--stage", train_stage, "1 = decoupled, 2 = fusion")->required();
    train_cmd->add_option("--out", train_out, "run directory");
    train_cmd->add_option("--checkpoint", train_ckpt, "stage-1 checkpoint (stage 2 init)");
    train_cmd->add_option("--resume", train_resume, "trainer state to resume from");

    std::string sample_ckpt, sample_traj, sample_image, sample_depth, sample_descriptor;
    std::string sample_out = "runs/sample";
    int sample_base = 0, sample_delta = -1;
    std::string sample_delta_stage;
    auto* sample_cmd = app.add_subcommand("sample", "generate a clip from a checkpoint");
    add_common(sample_cmd, sample_args);
    sample_cmd->add_option("--checkpoint", sample_ckpt)->required();
    sample_cmd->add_option("--trajectory", sample_traj)->required();
    sample_cmd->add_option("--image", sample_image, "conditioning frame (I2V mode)");
    sample_cmd->add_option("--depth", sample_depth, "conditioning depth (16-bit png)");
    sample_cmd->add_option("--descriptor", sample_descriptor, "scene descriptor tag");
    sample_cmd->add_option("--base-steps", sample_base, "staged schedule base step count");
    sample_cmd->add_option("--delta", sample_delta, "extra steps for the chosen stage");
    sample_cmd->add_option("--delta-stage", sample_delta_stage, "early|mid|late");
    sample_cmd->add_option("--out", sample_out, "output directory");

    std::string eval_gt, eval_pred;
    auto* eval_cmd = app.add_subcommand("eval-pose", "RE/TE between two trajectory files");
    eval_cmd->add_option("gt", eval_gt, "ground-truth trajectory")->required();
    eval_cmd->add_option("pred", eval_pred, "predicted trajectory")->required();

    std::string analyze_ckpt, analyze_mode = "cka", analyze_out = "runs/analyze";
    auto* analyze_cmd = app.add_subcommand("analyze", "CKA curves or schedule sweep");
    add_common(analyze_cmd, analyze_args);
    analyze_cmd->add_option("--checkpoint", analyze_ckpt)->required();
    analyze_cmd->add_option("--mode", analyze_mode, "cka | schedule");
    analyze_cmd->add_option("--out", analyze_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (render->parsed()) return cmd_render_data(render_args, render_out);
        if (train_cmd->parsed())
            return cmd_train(train_args, train_stage, train_out, train_ckpt, train_resume);
        if (sample_cmd->parsed()) {
            if (sample_base > 0) {
                sample_args.overrides.push_back("sample.staged=true");
                sample_args.overrides.push_back("sample.base_steps=" +
                                                std::to_string(sample_base));
            }
            if (sample_delta >= 0)
                sample_args.overrides.push_back("sample.delta=" + std::to_string(sample_delta));
            if (!sample_delta_stage.empty())
                sample_args.overrides.push_back("sample.delta_stage=" + sample_delta_stage);
            return cmd_sample(sample_args, sample_ckpt, sample_traj, sample_image, sample_depth,
                              sample_descriptor, sample_out);
        }
        if (eval_cmd->parsed()) return cmd_eval_pose(eval_gt, eval_pred);
        if (analyze_cmd->parsed())
            return cmd_analyze(analyze_args, analyze_ckpt, analyze_mode, analyze_out);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
