#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "gnf/bench.hpp"
#include "gnf/pipeline.hpp"
#include "gnf/trainer.hpp"

namespace fs = std::filesystem;
using namespace gnf;

namespace {

// exit codes: 0 ok, 1 generic, 2 missing/unloadable model, 3 corrupt or
// mismatched data, 4 non-finite numerics
constexpr int kExitGeneric = 1;
constexpr int kExitModel = 2;
constexpr int kExitMismatch = 3;
constexpr int kExitNonFinite = 4;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Bytes read_bytes(const std::string& path) {
    std::string s = read_file(path);
    return Bytes(s.begin(), s.end());
}

void write_file(const std::string& path, const void* data, size_t len) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    out.write(static_cast<const char*>(data), len);
    if (!out) throw Error("write failed: " + path);
}

std::optional<Model> load_model(const std::string& path) {
    if (path.empty()) return std::nullopt;
    if (!fs::exists(path)) {
        std::cerr << "model checkpoint not found: " << path << "\n";
        std::exit(kExitModel);
    }
    return Model::load_checkpoint(read_bytes(path));
}

// Builds the predictor factory named by --model / -m.
struct MethodSpec {
    std::string model = "neural";  // "uniform", "order-k:<k>", or "neural"
    std::string checkpoint;

    std::unique_ptr<PredictorFactory> make(std::optional<Model>& m, const GroupingConfig& g,
                                           uint32_t alphabet) const {
        if (model == "uniform") return std::make_unique<UniformFactory>(g.ngram, alphabet);
        if (model.rfind("order-k:", 0) == 0) {
            int k = std::stoi(model.substr(8));
            return std::make_unique<OrderKFactory>(k, g.ngram, alphabet);
        }
        if (model == "neural") {
            if (!m) {
                std::cerr << "neural model requires -m <checkpoint>\n";
                std::exit(kExitModel);
            }
            return std::make_unique<ModelFactory>(*m);
        }
        throw Error("unknown model spec '" + model + "'");
    }
};

std::string hex_of(const std::vector<uint8_t>& data) {
    static const char digits[] = "0123456789abcdef";
    std::string s;
    for (uint8_t x : data) {
        s.push_back(digits[x >> 4]);
        s.push_back(digits[x & 0xf]);
    }
    return s;
}

uint64_t default_seed() {
    if (const char* env = std::getenv("GNF_SEED")) return std::strtoull(env, nullptr, 10);
    return 1;
}

int run(int argc, char** argv) {
    CLI::App app{"gnf: neural DNA sequence compressor"};
    app.require_subcommand(1);
    size_t workers = std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;

    // --- compress ---
    auto* c = app.add_subcommand("compress", "compress a FASTA file to a .gnf archive");
    std::string c_in, c_out, c_ckpt;
    MethodSpec c_method;
    GroupingConfig c_group;
    bool c_instream = false;
    c->add_option("input", c_in, "input FASTA")->required();
    c->add_option("-o,--output", c_out, "output archive (default input + .gnf)");
    c->add_option("-m,--checkpoint", c_ckpt, "model checkpoint (.gfck)");
    c->add_option("--model", c_method.model, "uniform | order-k:<k> | neural");
    c->add_option("--group-len", c_group.group_len, "bases per fixed-length group");
    c->add_option("--context-len", c_group.context_len, "context bases (non-neural models)");
    c->add_option("--ngram", c_group.ngram, "bases per token (non-neural models)");
    c->add_option("--byte-group", c_group.byte_group, "byte-grouping factor (non-neural models)");
    c->add_flag("--n-in-stream", c_instream, "code N as a fifth symbol instead of a side channel");
    c->add_option("--workers", workers, "parallel group workers");

    // --- decompress ---
    auto* d = app.add_subcommand("decompress", "restore a FASTA file from a .gnf archive");
    std::string d_in, d_out, d_ckpt;
    d->add_option("archive", d_in, "input archive")->required();
    d->add_option("-o,--output", d_out, "output FASTA (default archive + .fa)");
    d->add_option("-m,--checkpoint", d_ckpt, "model checkpoint (.gfck)");
    d->add_option("--workers", workers, "parallel group workers");

    // --- verify ---
    auto* vf = app.add_subcommand("verify", "decompress and compare against the original");
    std::string v_fa, v_ar, v_ckpt;
    vf->add_option("input", v_fa, "original FASTA")->required();
    vf->add_option("archive", v_ar, "archive to check")->required();
    vf->add_option("-m,--checkpoint", v_ckpt, "model checkpoint (.gfck)");
    vf->add_option("--workers", workers, "parallel group workers");

    // --- train ---
    auto* t = app.add_subcommand("train", "train an entropy model on a FASTA corpus");
    std::string t_in, t_hybrid, t_out = "model.gfck", t_log;
    TrainConfig t_cfg;
    t_cfg.seed = default_seed();
    ModelConfig t_model;
    bool t_toy = false, t_no_latent = false, t_no_cut = false;
    size_t t_max_examples = 0;
    double t_val_frac = 0.1;
    t->add_option("input", t_in, "training FASTA")->required();
    t->add_option("--hybrid", t_hybrid, "second FASTA; batches concatenated per step");
    t->add_option("-o,--output", t_out, "checkpoint path");
    t->add_option("--log", t_log, "JSONL training history path");
    t->add_option("--epochs", t_cfg.epochs, "training epochs");
    t->add_option("--batch", t_cfg.batch_size, "batch size (per dataset in hybrid mode)");
    auto* lr_opt = t->add_option("--lr", t_cfg.lr, "learning rate (default 0.001, hybrid 0.002)");
    t->add_option("--seed", t_cfg.seed, "RNG seed (env GNF_SEED overrides the default)");
    t->add_option("--eval-every", t_cfg.eval_every, "epochs between validation passes");
    t->add_option("--max-seconds", t_cfg.max_seconds, "wall-clock training budget (0 = none)");
    t->add_option("--max-examples", t_max_examples, "cap on training examples (0 = all)");
    t->add_option("--val-frac", t_val_frac, "fraction of records held out for validation");
    t->add_flag("--toy", t_toy, "small preset that trains on one core in minutes");
    t->add_option("--ngram", t_model.ngram, "bases per token");
    t->add_option("--byte-group", t_model.byte_group, "byte-grouping factor");
    t->add_option("--d-m", t_model.d_m, "model width");
    t->add_option("--d-ff", t_model.d_ff, "feed-forward width");
    t->add_option("--heads", t_model.n_heads, "attention heads");
    t->add_flag("--no-latent-array", t_no_latent, "ablation: drop cross-segment memory");
    t->add_flag("--no-segment-cut", t_no_cut, "ablation: keep several segments of memory");

    // --- bench ---
    auto* b = app.add_subcommand("bench", "compare methods on one corpus");
    std::string b_in, b_ckpt, b_json;
    uint32_t b_orderk = 4;
    GroupingConfig b_group;
    bool b_ablate = false, b_no_latent = false, b_no_cut = false, b_external = false;
    double b_train_secs = 0.0;
    uint64_t b_seed = default_seed();
    b->add_option("input", b_in, "FASTA corpus")->required();
    b->add_option("-m,--checkpoint", b_ckpt, "neural model checkpoint for the neural rows");
    b->add_option("--order-k", b_orderk, "k for the order-k baseline row");
    b->add_option("--group-len", b_group.group_len, "bases per fixed-length group");
    b->add_option("--workers", workers, "parallel group workers");
    b->add_option("--seed", b_seed, "seed for ablation-grid toy models");
    b->add_option("--train-seconds", b_train_secs, "per-row training budget for the ablation grid");
    b->add_flag("--ablation-grid", b_ablate,
                "emit the grouping (BG/NG/FG) and latent/segment-cut grids");
    b->add_flag("--no-latent-array", b_no_latent, "run the neural row without memory");
    b->add_flag("--no-segment-cut", b_no_cut, "run the neural row with multi-segment memory");
    b->add_flag("--external", b_external, "add gzip/xz/zstd reference rows when available");
    b->add_option("--json", b_json, "also write the report as JSON");

    // --- inspect ---
    auto* ins = app.add_subcommand("inspect", "dump an archive header or checkpoint summary");
    std::string i_in;
    ins->add_option("input", i_in, "archive (.gnf) or checkpoint (.gfck)")->required();

    CLI11_PARSE(app, argc, argv);

    if (*c) {
        auto model = load_model(c_ckpt);
        if (model && c_method.model == "neural") {
            const auto& mc = model->config();
            c_group.ngram = mc.ngram;
            c_group.byte_group = mc.byte_group;
            c_group.context_len = mc.context_len;
        }
        auto records = parse_fasta(read_file(c_in));
        PipelineConfig cfg;
        cfg.grouping = c_group;
        cfg.n_mode = c_instream ? NMode::InStream : NMode::SideChannel;
        cfg.workers = workers;
        auto factory = c_method.make(model, c_group, c_instream ? 5 : 4);
        auto res = compress(records, *factory, cfg);
        if (c_out.empty()) c_out = c_in + ".gnf";
        write_file(c_out, res.archive.data(), res.archive.size());
        std::cout << "wrote " << c_out << ": " << res.stats.archive_bytes << " bytes, "
                  << res.stats.bpb << " bpb, " << res.stats.seconds << " s ("
                  << factory->name() << ")\n";
        return 0;
    }
    if (*d) {
        auto model = load_model(d_ckpt);
        auto records = decompress(read_bytes(d_in), model ? &*model : nullptr, workers);
        std::string fasta = write_fasta(records);
        if (d_out.empty()) d_out = d_in + ".fa";
        write_file(d_out, fasta.data(), fasta.size());
        std::cout << "wrote " << d_out << ": " << records.size() << " record(s)\n";
        return 0;
    }
    if (*vf) {
        auto model = load_model(v_ckpt);
        auto original = parse_fasta(read_file(v_fa));
        auto report = verify(original, read_bytes(v_ar), model ? &*model : nullptr, workers);
        std::cout << (report.ok ? "ok" : "MISMATCH") << ": " << report.total_bases << " bases, "
                  << report.bpb << " bpb, " << report.group_payloads.size() << " group(s), "
                  << report.seconds << " s\n";
        if (!report.ok) {
            std::cerr << report.detail << "\n";
            return kExitMismatch;
        }
        return 0;
    }
    if (*t) {
        bool hybrid = !t_hybrid.empty();
        if (hybrid && lr_opt->count() == 0) t_cfg.lr = 0.002;
        uint32_t t_ng = t->count("--ngram") ? t_model.ngram : (t_toy ? 2 : t_model.ngram);
        uint32_t t_bg = t->count("--byte-group") ? t_model.byte_group : (t_toy ? 4 : t_model.byte_group);
        ModelConfig mc = t_toy ? ModelConfig::toy(t_ng, t_bg) : t_model;
        if (t_toy) {
            if (t->count("--d-m")) mc.d_m = t_model.d_m;
            if (t->count("--d-ff")) mc.d_ff = t_model.d_ff;
            if (t->count("--heads")) mc.n_heads = t_model.n_heads;
        }
        mc.use_latent = !t_no_latent;
        mc.segment_cut = !t_no_cut;
        mc.validate();
        Model model(mc, t_cfg.seed);

        auto prepare = [&](const std::string& path, std::vector<BaseSeq>& train_seqs,
                           std::vector<BaseSeq>& val_seqs) {
            auto split = split_dataset(parse_fasta(read_file(path)), 1.0 - t_val_frac, t_val_frac,
                                       0.0, t_cfg.seed);
            for (auto& r : split.train) train_seqs.push_back(extract_n(r.seq).first);
            for (auto& r : split.val) val_seqs.push_back(extract_n(r.seq).first);
            if (val_seqs.empty() && !train_seqs.empty()) val_seqs.push_back(train_seqs.back());
        };
        auto cap = [&](std::vector<Example>& ex) {
            if (t_max_examples && ex.size() > t_max_examples) {
                std::vector<Example> kept;
                double step = double(ex.size()) / t_max_examples;
                for (size_t i = 0; i < t_max_examples; ++i) kept.push_back(ex[size_t(i * step)]);
                ex = std::move(kept);
            }
        };
        std::vector<BaseSeq> tr_a, va_a, tr_b, va_b;
        prepare(t_in, tr_a, va_a);
        auto ex_a = make_examples(tr_a, mc);
        auto val_a = make_examples(va_a, mc);
        cap(ex_a);
        cap(val_a);

        std::ofstream log_stream;
        if (!t_log.empty()) {
            log_stream.open(t_log);
            t_cfg.log = &log_stream;
        }
        TrainResult result;
        if (hybrid) {
            prepare(t_hybrid, tr_b, va_b);
            auto ex_b = make_examples(tr_b, mc);
            cap(ex_b);
            auto val_b = make_examples(va_b, mc);
            cap(val_b);
            auto val_all = val_a;
            val_all.insert(val_all.end(), val_b.begin(), val_b.end());
            result = hybrid_train(model, ex_a, ex_b, val_all, t_cfg);
            std::cout << "val bpb per dataset: " << evaluate_bpb(model, val_a) << " / "
                      << evaluate_bpb(model, val_b) << "\n";
        } else {
            result = train(model, ex_a, val_a, t_cfg);
        }
        write_file(t_out, result.best_checkpoint.data(), result.best_checkpoint.size());
        std::cout << "wrote " << t_out << ": best val bpb " << result.best_val_bpb << " at epoch "
                  << result.best_epoch << " (" << result.steps << " steps)\n";
        return 0;
    }
    if (*b) {
        auto records = parse_fasta(read_file(b_in));
        uint64_t total_bases = 0;
        for (const auto& r : records) total_bases += r.seq.size();
        PipelineConfig cfg;
        cfg.grouping = b_group;
        cfg.workers = workers;

        BenchReport report;
        {
            PipelineConfig u = cfg;
            u.grouping.ngram = 1;
            u.grouping.byte_group = 1;
            report.rows.push_back(bench_method(records, UniformFactory(1, 4), u));
            report.rows.push_back(bench_method(records, OrderKFactory(b_orderk, 1, 4), u));
        }
        auto model = load_model(b_ckpt);
        if (model) {
            model->set_memory_policy(!b_no_latent, !b_no_cut);
            PipelineConfig n = cfg;
            n.grouping.ngram = model->config().ngram;
            n.grouping.byte_group = model->config().byte_group;
            n.grouping.context_len = model->config().context_len;
            report.rows.push_back(bench_method(records, ModelFactory(*model), n, &*model));
        }
        if (b_external)
            for (const char* tool : {"gzip", "xz", "zstd"}) {
                auto row = bench_external(tool, b_in, total_bases);
                if (row)
                    report.rows.push_back(*row);
                else
                    std::cerr << "note: " << tool << " not available, row skipped\n";
            }
        std::cout << report.to_table();

        if (b_ablate) {
            auto grid = grouping_ablation_grid(records, cfg, b_seed, b_train_secs);
            std::cout << "\nmulti-level grouping ablation (BG/NG/FG):\n" << grid.to_table();
            report.rows.insert(report.rows.end(), grid.rows.begin(), grid.rows.end());
            if (model) {
                PipelineConfig n = cfg;
                n.grouping.ngram = model->config().ngram;
                n.grouping.byte_group = model->config().byte_group;
                n.grouping.context_len = model->config().context_len;
                auto lat = latent_ablation_grid(records, *model, n);
                std::cout << "\nlatent array / segment cut ablation:\n" << lat.to_table();
                report.rows.insert(report.rows.end(), lat.rows.begin(), lat.rows.end());
            }
        }
        if (!b_json.empty()) {
            std::string j = report.to_json();
            write_file(b_json, j.data(), j.size());
        }
        for (const auto& r : report.rows)
            if (!r.ok && r.method != "gzip" && r.method != "xz" && r.method != "zstd")
                return kExitGeneric;
        return 0;
    }
    if (*ins) {
        Bytes data = read_bytes(i_in);
        if (data.size() >= 4 && std::string(data.begin(), data.begin() + 4) == "GNF1") {
            Archive a = Archive::from_bytes(data);
            const auto& h = a.header;
            std::cout << "gnf archive v" << ArchiveHeader::kVersion << "\n"
                      << "  n mode: "
                      << (h.n_mode == NMode::SideChannel ? "side-channel" : "in-stream") << "\n"
                      << "  model: "
                      << (h.model_kind == ModelKind::Uniform    ? "uniform"
                          : h.model_kind == ModelKind::OrderK ? "order-" +
                                std::to_string(h.model_param)
                                                              : "neural")
                      << "\n  grouping: group_len " << h.grouping.group_len << ", context "
                      << h.grouping.context_len << ", ngram " << h.grouping.ngram
                      << ", byte_group " << unsigned(h.grouping.byte_group) << "\n"
                      << "  sequences: " << h.sequences.size() << "\n";
            if (h.model_kind == ModelKind::Neural) {
                std::cout << "  fingerprint: " << hex_of(h.fingerprint) << "\n";
            }
            for (const auto& s : h.sequences) {
                uint64_t payload = 0;
                for (uint64_t pl : s.payload_lengths) payload += pl;
                std::cout << "  > " << s.id << ": " << s.original_length << " bases, "
                          << s.payload_lengths.size() << " group(s), " << payload
                          << " payload bytes, " << s.side.runs.size() << " N run(s)\n";
            }
        } else {
            Model m = Model::load_checkpoint(data);
            const auto& mc = m.config();
            std::cout << "gnf checkpoint\n"
                      << "  params: " << m.count_params() << "\n"
                      << "  d_m " << mc.d_m << ", d_ff " << mc.d_ff << ", heads " << mc.n_heads
                      << ", context " << mc.context_len << ", ngram " << mc.ngram
                      << ", byte_group " << mc.byte_group << ", alphabet " << mc.alphabet << "\n"
                      << "  latent array: " << (mc.use_latent ? "on" : "off")
                      << ", segment cut: " << (mc.segment_cut ? "on" : "off") << "\n"
                      << "  fingerprint: " << hex_of(m.fingerprint()) << "\n";
        }
        return 0;
    }
    return kExitGeneric;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const NonFinite& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNonFinite;
    } catch (const ModelMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const CorruptStream& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const CrcMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const BadMagic& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const HashMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const MismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitGeneric;
    }
}
