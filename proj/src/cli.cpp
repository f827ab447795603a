#include "maskdiff/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "maskdiff/checkpoint.hpp"
#include "maskdiff/config.hpp"
#include "maskdiff/dataset.hpp"
#include "maskdiff/errors.hpp"
#include "maskdiff/metrics.hpp"
#include "maskdiff/sampler.hpp"
#include "maskdiff/sources.hpp"
#include "maskdiff/trainer.hpp"

namespace maskdiff {

namespace {

namespace fs = std::filesystem;

std::string resolve_out_dir(const std::string& configured) {
    if (const char* env = std::getenv("MASKDIFF_OUT_DIR")) {
        if (env[0] != '\0') return env;
    }
    return configured;
}

NoiseSchedule schedule_for(const std::string& family, int T) {
    return NoiseSchedule::make(family, T);
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
    std::string source = "markov-default";
    int count = 1000;
    int len = 16;
    uint64_t seed = 1;
    std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
    NamedSource src = make_source(a.source, a.len);
    Rng rng(derive_seed(a.seed, 0));
    DatasetFile ds;
    ds.len = a.len;
    ds.source = a.source;
    ds.seed = a.seed;
    if (src.markov) {
        ds.vocab = src.markov->vocab();
        ds.rows = src.markov->generate(a.count, a.len, rng);
    } else {
        ds.vocab = src.bracket->vocab();
        ds.rows = src.bracket->generate(a.count, rng);
    }
    write_dataset(ds, a.out);
    std::cout << "wrote " << ds.rows.size() << " sequences (vocab=" << ds.vocab
              << ", len=" << ds.len << ") to " << a.out << '\n';
    return 0;
}

// ------------------------------------------------------------ train family

struct TrainArgs {
    std::string config;
    std::vector<std::string> overrides;
    std::string base;  // posttrain only
    bool resume = false;
};

int run_training(const TrainArgs& a, bool posttrain) {
    RunConfig cfg = load_run_config(a.config, a.overrides);
    const std::string out_dir = resolve_out_dir(cfg.out_dir);
    fs::create_directories(out_dir);

    DenoiserModel model;
    OptimizerState opt;
    const std::string latest = out_dir + "/ckpt_latest.bin";
    if (a.resume && fs::exists(latest)) {
        LoadedCheckpoint lc = load_checkpoint(latest);
        if (!lc.has_opt) {
            throw UsageError("resume: '" + latest + "' carries no optimizer state");
        }
        model = std::move(lc.model);
        opt = std::move(lc.opt);
    } else if (posttrain) {
        if (a.base.empty()) throw UsageError("posttrain requires --base <checkpoint>");
        LoadedCheckpoint lc = load_checkpoint(a.base);
        if (cfg.train.sc_mode != ScMode::Off && !lc.model.cfg.has_sc) {
            model = attach_self_conditioning(lc.model, cfg.model.fusion, cfg.train.seed);
        } else {
            model = std::move(lc.model);
            model.trained_steps = 0;  // new run, new step streams
        }
        opt = OptimizerState::init_for(model);
    } else {
        ModelConfig mc = cfg.model;
        mc.has_sc = cfg.train.sc_mode != ScMode::Off;
        model = make_model(mc, cfg.train.seed);
        opt = OptimizerState::init_for(model);
    }
    if (posttrain) {
        // config budget counts additional tokens on top of the base model
        cfg.train.max_tokens += model.trained_tokens;
    }
    if (model.cfg.fusion != cfg.model.fusion && cfg.train.sc_mode != ScMode::Off &&
        model.cfg.has_sc) {
        throw ConfigError("config fusion mode disagrees with checkpoint");
    }

    DatasetFile ds = read_dataset(cfg.train_data);
    if (ds.vocab != model.cfg.vocab) {
        throw ConfigError("dataset vocab " + std::to_string(ds.vocab) +
                          " != model vocab " + std::to_string(model.cfg.vocab));
    }
    const NoiseSchedule schedule = schedule_for(cfg.schedule_family, model.cfg.steps);

    {
        std::ofstream cc(out_dir + "/config.json");
        cc << run_config_to_json(cfg);
    }
    std::ofstream log(out_dir + "/metrics.log", std::ios::app);
    if (!log) throw IoError("cannot open metrics log in '" + out_dir + "'");
    log.precision(10);

    const auto hook = [&](uint64_t step, const LossRecord& rec) {
        if (cfg.log_every > 0 && (step % cfg.log_every == 0)) {
            log << "step=" << step << " loss=" << rec.loss << " mean_t=" << rec.mean_t
                << " masked=" << rec.masked_count << " passes=" << rec.pass_count
                << " wall_ms=" << rec.wall_ms << '\n';
            log.flush();
        }
        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
            save_checkpoint(model, &opt, latest);
        }
    };

    TrainRunResult r = train_run(model, opt, cfg.train, schedule, ds.rows, hook);
    save_checkpoint(model, &opt, latest);
    save_checkpoint(model, &opt, out_dir + "/ckpt_final.bin");
    std::cout << "trained " << r.steps << " steps / " << r.tokens << " tokens"
              << " (model total " << model.trained_tokens << "); final loss "
              << r.final_loss << "; checkpoints in " << out_dir << '\n';
    return 0;
}

// ----------------------------------------------------------------- sample

struct SampleArgs {
    std::string checkpoint;
    std::string oracle;  // source name; exact-posterior denoiser
    int n = 100;
    int steps = 0;  // 0 = checkpoint default
    int len = 0;    // 0 = checkpoint default (required with --oracle)
    std::string schedule = "linear";
    uint64_t seed = 1;
    bool sc = false;
    std::string out;
    std::string traces;
};

int cmd_sample(const SampleArgs& a) {
    if (a.checkpoint.empty() == a.oracle.empty()) {
        throw UsageError("sample needs exactly one of --checkpoint or --oracle");
    }

    std::unique_ptr<DenoiserFn> denoiser;
    DenoiserModel model;
    NamedSource oracle_src;
    int vocab = 0, len = a.len;
    std::string source_tag;
    if (!a.checkpoint.empty()) {
        model = load_checkpoint(a.checkpoint).model;
        if (a.sc && !model.cfg.has_sc) {
            throw UsageError("--sc: checkpoint has no self-conditioning pathway");
        }
        vocab = model.cfg.vocab;
        if (len == 0) len = model.cfg.seq_len;
        if (len != model.cfg.seq_len) {
            throw UsageError("--len must match the checkpoint's sequence length");
        }
        denoiser = std::make_unique<ModelDenoiser>(model);
        source_tag = "model-samples";
    } else {
        if (len == 0) throw UsageError("--oracle requires --len");
        oracle_src = make_source(a.oracle, len);
        if (!oracle_src.markov) {
            throw UsageError("--oracle supports Markov sources only");
        }
        vocab = oracle_src.markov->vocab();
        denoiser = std::make_unique<OracleDenoiser>(*oracle_src.markov);
        source_tag = "oracle-samples";
    }
    const int T = a.steps > 0 ? a.steps : model.cfg.steps;
    const NoiseSchedule schedule = schedule_for(a.schedule, T);
    const Vocab v(vocab);

    std::vector<SampleResult> samples =
        batch_sample(*denoiser, v, schedule, len, a.n, a.seed, a.sc);

    DatasetFile ds;
    ds.vocab = vocab;
    ds.len = len;
    ds.source = source_tag;
    ds.seed = a.seed;
    for (const SampleResult& s : samples) ds.rows.push_back(s.tokens);
    write_dataset(ds, a.out);
    if (!a.traces.empty()) write_traces(samples, a.traces);
    std::cout << "sampled " << a.n << " sequences at T=" << T << " (denoiser calls/sample="
              << samples.front().trace.denoiser_calls << ") to " << a.out << '\n';
    return 0;
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
    std::string samples;
    std::string reference;
    std::string source;  // exact reference / gen-ppl / validity
    std::string traces;
    std::string checkpoint;
    std::string nll_data;
    std::string schedule = "linear";
    int k = 3;
    int mc_draws = 4;
    bool sc_emulation = false;
    uint64_t seed = 7;
    std::string out;
    std::string json_out;
};

int cmd_eval(const EvalArgs& a) {
    DatasetFile gen = read_dataset(a.samples);
    MetricReport report;

    double mean_entropy = 0.0;
    for (const TokenSeq& s : gen.rows) mean_entropy += token_entropy(s);
    report.set("token_entropy_nats", mean_entropy / gen.rows.size(), 0.0,
               static_cast<long>(gen.rows.size()));

    KmerHistogram gen_h = KmerHistogram::from_sequences(gen.rows, a.k, gen.vocab);
    if (!a.reference.empty()) {
        DatasetFile ref = read_dataset(a.reference);
        if (ref.vocab != gen.vocab) {
            throw UsageError("eval: sample vocab " + std::to_string(gen.vocab) +
                             " != reference vocab " + std::to_string(ref.vocab));
        }
        KmerHistogram ref_h = KmerHistogram::from_sequences(ref.rows, a.k, ref.vocab);
        report.set("js_" + std::to_string(a.k) + "mer_bits", kmer_js(gen_h, ref_h));
    }

    NamedSource src;
    if (!a.source.empty()) src = make_source(a.source, gen.len);
    if (src.markov) {
        if (src.markov->vocab() != gen.vocab) {
            throw UsageError("eval: sample vocab does not match --source");
        }
        KmerHistogram exact = KmerHistogram::from_probs(
            src.markov->exact_kmer_probs(a.k), a.k, gen.vocab);
        report.set("js_" + std::to_string(a.k) + "mer_exact_bits", kmer_js(gen_h, exact));
        GenPplResult ppl = gen_ppl_under_source(gen.rows, *src.markov);
        report.set("gen_ppl", ppl.ppl);
        report.set("gen_nll_nats", ppl.nats_per_token);
        report.set("gen_ppl_floor_hits", static_cast<double>(ppl.floor_violations));
        report.set("source_entropy_rate_nats", src.markov->entropy_rate());
    } else if (src.bracket) {
        std::vector<TokenSeq> train_rows;
        if (!a.reference.empty()) train_rows = read_dataset(a.reference).rows;
        VunCounts vun = grammar_vun(gen.rows, src.bracket->pairs, train_rows);
        report.set("valid", vun.valid, 0.0, static_cast<long>(gen.rows.size()));
        report.set("unique", vun.unique);
        report.set("novel", vun.novel);
    }

    if (!a.traces.empty()) {
        std::vector<SamplerTrace> traces = read_traces(a.traces);
        if (traces.empty()) throw UsageError("eval: trace file is empty");
        double lar = 0.0, gar = 0.0;
        for (const SamplerTrace& tr : traces) {
            lar += local_ar_at_1(tr, gen.len);
            gar += global_ar_at_k(tr, gen.len, 4);
        }
        report.set("local_ar_at_1", lar / traces.size(), 0.0,
                   static_cast<long>(traces.size()));
        report.set("global_ar_at_4", gar / traces.size(), 0.0,
                   static_cast<long>(traces.size()));
    }

    if (!a.checkpoint.empty()) {
        if (a.nll_data.empty()) throw UsageError("eval: --checkpoint requires --nll-data");
        DenoiserModel model = load_checkpoint(a.checkpoint).model;
        DatasetFile held = read_dataset(a.nll_data);
        if (held.vocab != model.cfg.vocab) {
            throw UsageError("eval: held-out vocab does not match checkpoint");
        }
        const NoiseSchedule schedule = schedule_for(a.schedule, model.cfg.steps);
        NllEstimate e = nll_upper_bound(model, held.rows, schedule, a.mc_draws, a.seed,
                                        a.sc_emulation);
        report.set("nll_bound_nats", e.nats_per_token, e.std_error,
                   static_cast<long>(e.sequences) * e.draws);
    }

    if (!a.out.empty()) report.write_kv(a.out);
    if (!a.json_out.empty()) report.write_json(a.json_out);
    for (const auto& [name, m] : report.metrics) {
        std::cout << name << ' ' << m.value;
        if (m.n > 0) std::cout << " se=" << m.std_error << " n=" << m.n;
        std::cout << '\n';
    }
    return 0;
}

// ----------------------------------------------------------------- compare

int cmd_compare(const std::string& path_a, const std::string& path_b,
                const std::string& out_path) {
    MetricReport a = MetricReport::read_kv(path_a);
    MetricReport b = MetricReport::read_kv(path_b);
    std::ostringstream table;
    table.precision(8);
    table << "metric A B delta rel_improvement\n";
    for (const auto& [name, ma] : a.metrics) {
        auto it = b.metrics.find(name);
        if (it == b.metrics.end()) continue;
        const double va = ma.value, vb = it->second.value;
        const double rel = va != 0.0 ? (va - vb) / std::abs(va) : 0.0;
        table << name << ' ' << va << ' ' << vb << ' ' << (vb - va) << ' ' << rel << '\n';
    }
    const std::string text = table.str();
    std::cout << text;
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw IoError("cannot open '" + out_path + "' for writing");
        out << text;
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"maskdiff: absorbing-mask discrete diffusion lab"};
    app.require_subcommand(1);

    GenDataArgs gd;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--source", gd.source,
                    "markov-default | markov-tiny | bracket")->capture_default_str();
    gen->add_option("--count", gd.count, "number of sequences")->capture_default_str();
    gen->add_option("--len", gd.len, "sequence length")->capture_default_str();
    gen->add_option("--seed", gd.seed, "master seed")->capture_default_str();
    gen->add_option("--out", gd.out, "output dataset path")->required();

    TrainArgs tr, pt;
    CLI::App* train = app.add_subcommand("train", "train a model from scratch");
    train->add_option("--config", tr.config, "run config JSON")->required();
    train->add_option("--set", tr.overrides, "scalar override key.path=value");
    train->add_flag("--resume", tr.resume, "resume from the run's latest checkpoint");

    CLI::App* post = app.add_subcommand("posttrain", "continue from a base checkpoint");
    post->add_option("--config", pt.config, "run config JSON")->required();
    post->add_option("--set", pt.overrides, "scalar override key.path=value");
    post->add_option("--base", pt.base, "base checkpoint to start from");
    post->add_flag("--resume", pt.resume, "resume from the run's latest checkpoint");

    SampleArgs sa;
    CLI::App* samp = app.add_subcommand("sample", "draw ancestral samples");
    samp->add_option("--checkpoint", sa.checkpoint, "model checkpoint");
    samp->add_option("--oracle", sa.oracle, "exact-posterior source (markov-* only)");
    samp->add_option("--n", sa.n, "number of samples")->capture_default_str();
    samp->add_option("--steps", sa.steps, "reverse steps T (default: checkpoint's)");
    samp->add_option("--len", sa.len, "sequence length (defaults to checkpoint's)");
    samp->add_option("--schedule", sa.schedule, "linear | loglinear")->capture_default_str();
    samp->add_option("--seed", sa.seed, "master seed")->capture_default_str();
    samp->add_flag("--sc,!--no-sc", sa.sc, "feed back the previous clean-state estimate");
    samp->add_option("--out", sa.out, "output sample file")->required();
    samp->add_option("--traces", sa.traces, "trace sidecar path");

    EvalArgs ev;
    CLI::App* eval = app.add_subcommand("eval", "compute metrics for a sample file");
    eval->add_option("--samples", ev.samples, "generated sample file")->required();
    eval->add_option("--reference", ev.reference, "reference dataset");
    eval->add_option("--source", ev.source, "exact source for gen-ppl / validity");
    eval->add_option("--traces", ev.traces, "trace sidecar for AR-ness metrics");
    eval->add_option("--checkpoint", ev.checkpoint, "model for the NLL bound");
    eval->add_option("--nll-data", ev.nll_data, "held-out data for the NLL bound");
    eval->add_option("--schedule", ev.schedule, "schedule family for the NLL bound")
        ->capture_default_str();
    eval->add_option("--k", ev.k, "k-mer size")->capture_default_str();
    eval->add_option("--mc-draws", ev.mc_draws, "MC draws per held-out sequence")
        ->capture_default_str();
    eval->add_flag("--sc-emulation", ev.sc_emulation, "two-pass NLL bound");
    eval->add_option("--seed", ev.seed, "seed for the NLL bound")->capture_default_str();
    eval->add_option("--out", ev.out, "report path (key-value text)");
    eval->add_option("--json", ev.json_out, "report path (JSON)");

    std::string cmp_a, cmp_b, cmp_out;
    CLI::App* cmp = app.add_subcommand("compare", "per-metric deltas of two reports");
    cmp->add_option("reportA", cmp_a)->required();
    cmp->add_option("reportB", cmp_b)->required();
    cmp->add_option("--out", cmp_out, "write the delta table here too");

    try {
        app.parse(argc, argv);
        if (*gen) return cmd_gen_data(gd);
        if (*train) return run_training(tr, /*posttrain=*/false);
        if (*post) return run_training(pt, /*posttrain=*/true);
        if (*samp) return cmd_sample(sa);
        if (*eval) return cmd_eval(ev);
        if (*cmp) return cmd_compare(cmp_a, cmp_b, cmp_out);
        throw UsageError("no subcommand given");
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "maskdiff: error: usage: " << e.what() << '\n';
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "maskdiff: error: usage: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "maskdiff: error: config: " << e.what() << '\n';
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "maskdiff: error: numeric: " << e.what() << '\n';
        return 4;
    } catch (const IoError& e) {
        std::cerr << "maskdiff: error: io: " << e.what() << '\n';
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "maskdiff: error: internal: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace maskdiff
