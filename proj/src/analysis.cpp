#include "dualcam/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dualcam/errors.hpp"
#include "dualcam/image_io.hpp"
#include "dualcam/rng.hpp"

namespace dcam::analysis {

namespace fs = std::filesystem;
using geom::Mat3;
using geom::Pose;
using geom::Vec3;

double linear_cka(const Tensor& x, const Tensor& y) {
    if (x.rank() != 2 || y.rank() != 2) throw ShapeError("cka: feature matrices must be 2-D");
    if (x.dim(0) != y.dim(0)) throw ShapeError("cka: row counts differ");
    if (x.dim(0) < 2) throw ShapeError("cka: need at least two rows");
    if (!x.all_finite() || !y.all_finite()) throw ValueError("cka: non-finite features");

    const long n = x.dim(0);
    Eigen::MatrixXd xc(n, x.dim(1)), yc(n, y.dim(1));
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < x.dim(1); ++j) xc(i, j) = x.at(i, j);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < y.dim(1); ++j) yc(i, j) = y.at(i, j);
    xc.rowwise() -= xc.colwise().mean();
    yc.rowwise() -= yc.colwise().mean();

    double num = (yc.transpose() * xc).squaredNorm();
    double dx = (xc.transpose() * xc).norm();
    double dy = (yc.transpose() * yc).norm();
    if (dx <= 0 || dy <= 0) return 0.0;
    return num / (dx * dy);
}

// ---- probes -----------------------------------------------------------------

static int tokens_leaf1(nn::Tape& tape, const TensorF& t) {
    std::vector<long> shape = {1};
    shape.insert(shape.end(), t.shape.begin(), t.shape.end());
    return tape.leaf(std::move(shape), t.data);
}

static Tensor node_matrix(nn::Tape& tape, int node, long row0, long rows, long cols) {
    Tensor out({rows, cols});
    const auto& v = tape.val(node);
    for (long i = 0; i < rows * cols; ++i)
        out.data[static_cast<size_t>(i)] = static_cast<double>(v[static_cast<size_t>(row0 * cols + i)]);
    return out;
}

ProbeResult probe_activations(dit::DualDit& model, const data::Dataset& ds,
                              const data::Clip& clip, const Tensor& z_rgb_tokens,
                              const Tensor& z_depth_tokens, double t, bool gamma) {
    pipeline::Conditions cond = pipeline::conditions_from_clip(clip, ds);
    const long L = cond.grid.tokens();
    const long C = model.cfg.latent_channels;

    nn::Tape tape;
    int rays = model.encode_rays(tape, tokens_leaf1(tape, cond.rays_grouped), cond.grid);
    int in_r = model.assemble(tape, tokens_leaf1(tape, cond.cond_rgb_tokens), rays,
                              tokens_leaf1(tape, z_rgb_tokens.cast<float>()));
    int in_d = -1;
    if (model.cfg.dual)
        in_d = model.assemble(tape, tokens_leaf1(tape, cond.cond_depth_tokens), rays,
                              tokens_leaf1(tape, z_depth_tokens.cast<float>()));
    auto fwd = model.forward(tape, in_r, in_d, t, {cond.descriptor_id}, cond.grid, gamma, true);

    ProbeResult res;
    const long emb = model.cfg.emb_dim;
    for (int node : fwd.rgb_layers) res.rgb_layers.push_back(node_matrix(tape, node, 0, L, emb));
    for (int node : fwd.depth_layers)
        res.depth_layers.push_back(node_matrix(tape, node, 0, L, emb));
    res.ray_target = node_matrix(tape, fwd.ray_latent, 0, L, C);
    res.depth_target = clip.z_depth_tokens.cast<double>();
    return res;
}

// ---- CKA vs stage report ----------------------------------------------------

namespace {

struct CurvePoint {
    double mean = 0, var = 0;
};

CurvePoint aggregate(const std::vector<double>& vals) {
    CurvePoint p;
    for (double v : vals) p.mean += v;
    p.mean /= static_cast<double>(vals.size());
    for (double v : vals) p.var += (v - p.mean) * (v - p.mean);
    p.var /= static_cast<double>(vals.size());
    return p;
}

void write_curve_csv(const std::string& path,
                     const std::vector<std::tuple<diffusion::Stage, int, double, CurvePoint>>& rows,
                     int probe_clips) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write report: " + path);
    out << "# linear CKA; rows are per-token positions of one clip, values averaged over "
        << probe_clips << " probe clips\n";
    out << "stage,layer,t,cka_mean,cka_var\n";
    char buf[160];
    for (const auto& [stage, layer, t, p] : rows) {
        std::snprintf(buf, sizeof buf, "%s,%d,%.9g,%.9g,%.9g\n", diffusion::stage_name(stage),
                      layer, t, p.mean, p.var);
        out << buf;
    }
}

}  // namespace

void cka_vs_stage_report(dit::DualDit& model, const data::Dataset& ds,
                         const diffusion::TimestepSchedule& schedule, int probe_clips,
                         uint64_t seed, bool gamma, const std::string& out_dir, bool plots) {
    const int B = std::min<int>(probe_clips, static_cast<int>(ds.clips.size()));
    if (B < 1) throw ConfigError("need at least one probe clip");
    dit::TokenGrid grid{ds.latent_frames(), ds.grid_h(), ds.grid_w()};
    const long L = grid.tokens();
    const long C = model.cfg.latent_channels;
    const int layers = model.cfg.num_blocks;

    // Per-clip latent states, advanced by the same Euler rule as sampling.
    std::vector<Tensor> z_rgb(static_cast<size_t>(B)), z_depth(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
        Rng rng(Rng::derive(seed, "cka-noise", static_cast<uint64_t>(b)));
        Tensor eps({L, C});
        for (auto& v : eps.data) v = rng.normal();
        z_rgb[static_cast<size_t>(b)] = eps;
        z_depth[static_cast<size_t>(b)] = eps;
    }

    using Key = std::pair<int, int>;  // (layer index, timestep index)
    std::vector<std::vector<double>> rgb_ray, depth_ray, rgb_depth;
    const size_t cells = static_cast<size_t>(layers) * schedule.timesteps.size();
    rgb_ray.resize(cells);
    depth_ray.resize(cells);
    rgb_depth.resize(cells);
    auto cell = [&](int layer, int ti) {
        return static_cast<size_t>(layer) * schedule.timesteps.size() + static_cast<size_t>(ti);
    };

    for (size_t ti = 0; ti < schedule.timesteps.size(); ++ti) {
        double t = schedule.timesteps[ti];
        double t_next = ti + 1 < schedule.timesteps.size() ? schedule.timesteps[ti + 1] : 0.0;
        for (int b = 0; b < B; ++b) {
            const data::Clip& clip = ds.clips[static_cast<size_t>(b)];
            ProbeResult probe = probe_activations(model, ds, clip, z_rgb[static_cast<size_t>(b)],
                                                  z_depth[static_cast<size_t>(b)], t, gamma);
            for (int k = 0; k < layers; ++k) {
                rgb_ray[cell(k, static_cast<int>(ti))].push_back(
                    linear_cka(probe.rgb_layers[static_cast<size_t>(k)], probe.ray_target));
                rgb_depth[cell(k, static_cast<int>(ti))].push_back(
                    linear_cka(probe.rgb_layers[static_cast<size_t>(k)], probe.depth_target));
                if (model.cfg.dual)
                    depth_ray[cell(k, static_cast<int>(ti))].push_back(linear_cka(
                        probe.depth_layers[static_cast<size_t>(k)], probe.ray_target));
            }
            // Euler update with this step's predicted velocities.
            auto [vr, vd] = pipeline::model_velocity(
                model, pipeline::conditions_from_clip(clip, ds), z_rgb[static_cast<size_t>(b)],
                z_depth[static_cast<size_t>(b)], t, gamma);
            double dt = t - t_next;
            for (long i = 0; i < L * C; ++i)
                z_rgb[static_cast<size_t>(b)][i] -= dt * vr[i];
            if (model.cfg.dual)
                for (long i = 0; i < L * C; ++i)
                    z_depth[static_cast<size_t>(b)][i] -= dt * vd[i];
        }
    }

    fs::create_directories(out_dir);
    auto emit = [&](const std::string& name, std::vector<std::vector<double>>& cells_vals) {
        std::vector<std::tuple<diffusion::Stage, int, double, CurvePoint>> rows;
        for (int k = 0; k < layers; ++k)
            for (size_t ti = 0; ti < schedule.timesteps.size(); ++ti) {
                const auto& vals = cells_vals[cell(k, static_cast<int>(ti))];
                if (vals.empty()) continue;
                rows.emplace_back(schedule.stages[ti], k + 1, schedule.timesteps[ti],
                                  aggregate(vals));
            }
        write_curve_csv((fs::path(out_dir) / name).string(), rows, B);
        if (plots) {
            // One series per stage: layer-averaged mean CKA across timesteps.
            std::vector<std::vector<double>> series(1);
            for (size_t ti = 0; ti < schedule.timesteps.size(); ++ti) {
                double acc = 0;
                for (int k = 0; k < layers; ++k)
                    acc += aggregate(cells_vals[cell(k, static_cast<int>(ti))]).mean;
                series[0].push_back(acc / layers);
            }
            std::string plot = name.substr(0, name.size() - 4) + ".png";
            write_line_plot((fs::path(out_dir) / plot).string(), series);
        }
    };
    emit("cka_rgb_ray.csv", rgb_ray);
    emit("cka_rgb_depth.csv", rgb_depth);
    if (model.cfg.dual) emit("cka_depth_ray.csv", depth_ray);
}

// ---- photometric trajectory registration ------------------------------------

namespace {

struct Objective {
    const scene::SceneSpec* scene;
    const Pose* init;
    geom::Intrinsics intr;
    int H, W;
    const std::vector<double>* target;  // 3 x H x W at eval resolution
    mutable std::vector<double> scratch;

    static Pose apply(const Pose& base, const double* p) {
        Vec3 omega{p[0], p[1], p[2]};
        Vec3 delta{p[3], p[4], p[5]};
        Pose out;
        double angle = omega.norm();
        Mat3 rot = angle > 1e-12 ? geom::axis_angle(omega, angle) : Mat3::identity();
        out.rotation = base.rotation * rot;
        out.translation = base.translation + base.rotation * delta;
        return out;
    }

    double operator()(const double* p) const {
        Pose pose = apply(*init, p);
        scratch.resize(static_cast<size_t>(3) * H * W);
        scene::render_frame(*scene, pose, intr, H, W, scratch.data(), nullptr);
        double acc = 0;
        for (size_t i = 0; i < scratch.size(); ++i) {
            double d = scratch[i] - (*target)[i];
            acc += d * d;
        }
        return acc / static_cast<double>(scratch.size());
    }
};

// Nelder-Mead with standard coefficients; deterministic.
template <typename F>
std::vector<double> nelder_mead(const F& f, std::vector<double> x0,
                                const std::vector<double>& step, int iters) {
    const int n = static_cast<int>(x0.size());
    std::vector<std::vector<double>> simplex(static_cast<size_t>(n + 1), x0);
    for (int i = 0; i < n; ++i)
        simplex[static_cast<size_t>(i + 1)][static_cast<size_t>(i)] +=
            step[static_cast<size_t>(i)];
    std::vector<double> fx(static_cast<size_t>(n + 1));
    for (int i = 0; i <= n; ++i) fx[static_cast<size_t>(i)] = f(simplex[static_cast<size_t>(i)].data());

    auto order = [&]() {
        std::vector<int> idx(static_cast<size_t>(n + 1));
        for (int i = 0; i <= n; ++i) idx[static_cast<size_t>(i)] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            return fx[static_cast<size_t>(a)] < fx[static_cast<size_t>(b)];
        });
        std::vector<std::vector<double>> s2;
        std::vector<double> f2;
        for (int i : idx) {
            s2.push_back(simplex[static_cast<size_t>(i)]);
            f2.push_back(fx[static_cast<size_t>(i)]);
        }
        simplex = std::move(s2);
        fx = std::move(f2);
    };

    for (int it = 0; it < iters; ++it) {
        order();
        std::vector<double> centroid(static_cast<size_t>(n), 0.0);
        for (int i = 0; i < n; ++i)
            for (int d = 0; d < n; ++d)
                centroid[static_cast<size_t>(d)] +=
                    simplex[static_cast<size_t>(i)][static_cast<size_t>(d)] / n;

        auto blend = [&](double coef) {
            std::vector<double> p(static_cast<size_t>(n));
            for (int d = 0; d < n; ++d)
                p[static_cast<size_t>(d)] =
                    centroid[static_cast<size_t>(d)] +
                    coef * (centroid[static_cast<size_t>(d)] -
                            simplex[static_cast<size_t>(n)][static_cast<size_t>(d)]);
            return p;
        };

        std::vector<double> refl = blend(1.0);
        double f_refl = f(refl.data());
        if (f_refl < fx[0]) {
            std::vector<double> exp = blend(2.0);
            double f_exp = f(exp.data());
            if (f_exp < f_refl) {
                simplex[static_cast<size_t>(n)] = exp;
                fx[static_cast<size_t>(n)] = f_exp;
            } else {
                simplex[static_cast<size_t>(n)] = refl;
                fx[static_cast<size_t>(n)] = f_refl;
            }
        } else if (f_refl < fx[static_cast<size_t>(n - 1)]) {
            simplex[static_cast<size_t>(n)] = refl;
            fx[static_cast<size_t>(n)] = f_refl;
        } else {
            std::vector<double> con = blend(-0.5);
            double f_con = f(con.data());
            if (f_con < fx[static_cast<size_t>(n)]) {
                simplex[static_cast<size_t>(n)] = con;
                fx[static_cast<size_t>(n)] = f_con;
            } else {
                for (int i = 1; i <= n; ++i) {
                    for (int d = 0; d < n; ++d)
                        simplex[static_cast<size_t>(i)][static_cast<size_t>(d)] =
                            simplex[0][static_cast<size_t>(d)] +
                            0.5 * (simplex[static_cast<size_t>(i)][static_cast<size_t>(d)] -
                                   simplex[0][static_cast<size_t>(d)]);
                    fx[static_cast<size_t>(i)] = f(simplex[static_cast<size_t>(i)].data());
                }
            }
        }
    }
    order();
    return simplex[0];
}

}  // namespace

geom::CameraTrajectory register_trajectory(const codec::VideoTensor& frames,
                                           const scene::SceneSpec& scene,
                                           const geom::CameraTrajectory& init) {
    if (frames.frames() != init.frame_count())
        throw ShapeError("frame count does not match the trajectory");
    const int H = static_cast<int>(frames.height()), W = static_cast<int>(frames.width());
    const int eH = H / 2, eW = W / 2;

    geom::CameraTrajectory out = init;
    std::vector<double> target(static_cast<size_t>(3) * eH * eW);
    std::vector<double> warm(6, 0.0);
    for (int t = 0; t < init.frame_count(); ++t) {
        // 2x2 box downsample of the generated frame.
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j < eH; ++j)
                for (int i = 0; i < eW; ++i) {
                    double acc = 0;
                    for (int dj = 0; dj < 2; ++dj)
                        for (int di = 0; di < 2; ++di)
                            acc += frames.data.at(t, c, 2 * j + dj, 2 * i + di);
                    target[(static_cast<size_t>(c) * eH + j) * eW + i] = acc / 4.0;
                }

        const geom::Intrinsics& full = init.intr(t);
        Objective obj;
        obj.scene = &scene;
        obj.init = &init.poses[static_cast<size_t>(t)];
        obj.intr = {full.fx / 2, full.fy / 2, full.cx / 2, full.cy / 2};
        obj.H = eH;
        obj.W = eW;
        obj.target = &target;

        std::vector<double> fit =
            nelder_mead(obj, warm, {0.04, 0.04, 0.04, 0.08, 0.08, 0.08}, 120);
        out.poses[static_cast<size_t>(t)] = Objective::apply(*obj.init, fit.data());
        warm = fit;  // consecutive frames move little
    }
    return out;
}

// ---- stage allocation sweep --------------------------------------------------

static diffusion::TimestepSchedule sweep_schedule(int base, int delta,
                                                  std::optional<diffusion::Stage> stage) {
    return diffusion::build_timestep_schedule(base, delta, stage);
}

std::vector<SweepRow> stage_allocation_sweep(dit::DualDit& model, const data::Dataset& holdout,
                                             const codec::Codec& codec, int base,
                                             const std::vector<int>& deltas,
                                             const std::vector<diffusion::Stage>& stages,
                                             int seeds, uint64_t seed, bool gamma) {
    // Delta = 0 is the same schedule under every stage label; emit it once.
    std::vector<std::pair<std::string, std::optional<diffusion::Stage>>> configs;
    std::vector<int> config_delta;
    for (int d : deltas) {
        if (d == 0) {
            configs.emplace_back("none", std::nullopt);
            config_delta.push_back(0);
        } else {
            for (diffusion::Stage s : stages) {
                configs.emplace_back(diffusion::stage_name(s), s);
                config_delta.push_back(d);
            }
        }
    }

    std::vector<SweepRow> rows;
    for (size_t c = 0; c < configs.size(); ++c) {
        auto schedule = sweep_schedule(base, config_delta[c], configs[c].second);
        for (int s = 0; s < seeds; ++s) {
            SweepRow row;
            row.stage = configs[c].first;
            row.delta = config_delta[c];
            row.steps = static_cast<int>(schedule.timesteps.size());
            row.seed = s;
            double re = 0, te = 0, recon = 0;
            for (size_t k = 0; k < holdout.clips.size(); ++k) {
                const data::Clip& clip = holdout.clips[k];
                uint64_t sample_seed =
                    Rng::derive(seed, "sweep", (static_cast<uint64_t>(s) << 32) |
                                                   (static_cast<uint64_t>(c) << 16) | k);
                auto latents = pipeline::generate(model, pipeline::conditions_from_clip(clip, holdout),
                                                  schedule, sample_seed, gamma);
                codec::VideoTensor video = codec.decode(latents.rgb);
                for (auto& v : video.data.data) v = std::clamp(v, -1.0, 1.0);
                auto est = register_trajectory(video, clip.scene, clip.traj);
                re += geom::rotation_error_deg(est, clip.traj);
                te += geom::translation_error(est, clip.traj);
                recon += diffusion::mse(video.data, clip.rgb.data);
            }
            const double n = static_cast<double>(holdout.clips.size());
            row.re = re / n;
            row.te = te / n;
            row.recon = recon / n;
            rows.push_back(row);
        }
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "stage,delta,steps,seed,re,te,recon\n";
    char buf[200];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%.9g,%.9g,%.9g\n", r.stage.c_str(), r.delta,
                      r.steps, r.seed, r.re, r.te, r.recon);
        out += buf;
    }
    return out;
}

static double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

DepthBenefitReport depth_benefit_report(dit::DualDit& fusion_model, dit::DualDit& ablation,
                                        const data::Dataset& holdout,
                                        const codec::Codec& codec,
                                        const diffusion::TimestepSchedule& schedule, int seeds,
                                        uint64_t seed) {
    DepthBenefitReport report;
    auto evaluate = [&](dit::DualDit& model, bool gamma, std::vector<double>& res) {
        for (int s = 0; s < seeds; ++s)
            for (size_t k = 0; k < holdout.clips.size(); ++k) {
                const data::Clip& clip = holdout.clips[k];
                uint64_t sample_seed = Rng::derive(
                    seed, "benefit", (static_cast<uint64_t>(s) << 32) | k);
                auto latents = pipeline::generate(
                    model, pipeline::conditions_from_clip(clip, holdout), schedule, sample_seed,
                    gamma);
                codec::VideoTensor video = codec.decode(latents.rgb);
                for (auto& v : video.data.data) v = std::clamp(v, -1.0, 1.0);
                auto est = register_trajectory(video, clip.scene, clip.traj);
                res.push_back(geom::rotation_error_deg(est, clip.traj));
            }
    };
    evaluate(fusion_model, true, report.re_fusion);
    evaluate(ablation, false, report.re_ablation);
    report.median_re_fusion = median(report.re_fusion);
    report.median_re_ablation = median(report.re_ablation);
    return report;
}

void write_line_plot(const std::string& path, const std::vector<std::vector<double>>& series,
                     int width, int height) {
    std::vector<uint8_t> pix(static_cast<size_t>(width) * height * 3, 255);
    double lo = 0, hi = 1;
    for (const auto& s : series)
        for (double v : s) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (hi <= lo) hi = lo + 1;
    const uint8_t colors[4][3] = {{200, 60, 50}, {40, 110, 190}, {60, 160, 70}, {150, 90, 170}};
    auto put = [&](int x, int y, const uint8_t* c) {
        if (x < 0 || x >= width || y < 0 || y >= height) return;
        size_t off = (static_cast<size_t>(y) * width + x) * 3;
        pix[off] = c[0];
        pix[off + 1] = c[1];
        pix[off + 2] = c[2];
    };
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        if (s.size() < 2) continue;
        const uint8_t* col = colors[si % 4];
        for (size_t i = 0; i + 1 < s.size(); ++i) {
            double x0 = static_cast<double>(i) / (s.size() - 1) * (width - 1);
            double x1 = static_cast<double>(i + 1) / (s.size() - 1) * (width - 1);
            double y0 = (1.0 - (s[i] - lo) / (hi - lo)) * (height - 1);
            double y1 = (1.0 - (s[i + 1] - lo) / (hi - lo)) * (height - 1);
            int steps = std::max(std::abs(static_cast<int>(x1 - x0)),
                                 std::abs(static_cast<int>(y1 - y0))) + 1;
            for (int k = 0; k <= steps; ++k) {
                double f = static_cast<double>(k) / steps;
                put(static_cast<int>(std::lround(x0 + f * (x1 - x0))),
                    static_cast<int>(std::lround(y0 + f * (y1 - y0))), col);
            }
        }
    }
    imageio::write_png_rgb8(path, width, height, pix);
}

}  // namespace dcam::analysis
