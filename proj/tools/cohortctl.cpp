// cohortctl: corpus generation, indexing, query parsing, search, benchmark
// and the HTTP service. Exit codes: 0 ok, 1 usage error, 2 data error.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cohort/cohort.hpp"
#include "cohort/http.hpp"

#ifndef COHORT_DATA_DIR
#define COHORT_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace cohort;

namespace {

constexpr int kUsage = 1;
constexpr int kDataError = 2;

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw ParseError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct IndexSource {
    std::string snapshot;
    std::string corpus;

    void add_options(CLI::App* cmd) {
        auto* s = cmd->add_option("--snapshot", snapshot, "Index snapshot written by `index`");
        auto* c = cmd->add_option("--corpus", corpus, "Corpus directory (indexed on the fly)");
        s->excludes(c);
    }

    CohortIndex load(const Vocabulary& vocab) const {
        if (!snapshot.empty())
            return load_snapshot(snapshot);
        if (!corpus.empty())
            return build_index(load_corpus(fs::path(corpus), vocab));
        throw CLI::RequiredError("--snapshot or --corpus");
    }
};

std::vector<CohortQuery> load_queries(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<CohortQuery> out;
    for (const auto& f : files) {
        try {
            out.push_back(deserialize_query(read_file(f)));
        } catch (const ParseError& e) {
            throw ParseError(f.filename().string() + ": " + e.what(), 0, e.field_path());
        }
    }
    if (out.empty())
        throw ConfigError("no query documents (*.json) in " + dir.string());
    return out;
}

std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cohort retrieval engine: index EHR corpora, run cohort queries, evaluate P@k."};
    app.require_subcommand(1);
    std::string vocab_path = std::string(COHORT_DATA_DIR) + "/vocab";
    app.add_option("--vocab", vocab_path, "Vocabulary directory or concepts.tsv")->capture_default_str();
    std::string triggers_path;
    app.add_option("--triggers", triggers_path, "Trigger lexicon TSV replacing the built-in lexicon");

    // gen-corpus
    auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a seeded synthetic corpus with ground truth");
    std::string spec_path, out_dir;
    std::uint64_t gen_seed = 0;
    gen_cmd->add_option("--spec", spec_path, "Generator spec JSON")->required();
    gen_cmd->add_option("--seed", gen_seed, "PRNG seed")->required();
    gen_cmd->add_option("--out", out_dir, "Output directory")->required();

    // index
    auto* index_cmd = app.add_subcommand("index", "Load a corpus, build the index, optionally save a snapshot");
    std::string index_corpus, index_snapshot;
    index_cmd->add_option("--corpus", index_corpus, "Corpus directory")->required();
    index_cmd->add_option("--snapshot", index_snapshot, "Write the index snapshot here");

    // parse
    auto* parse_cmd = app.add_subcommand("parse", "Turn free text into a query document");
    std::string parse_text, parse_as_of, parse_id;
    parse_cmd->add_option("--text", parse_text, "Cohort criterion text")->required();
    parse_cmd->add_option("--as-of", parse_as_of, "Reference date YYYY-MM-DD (default: today, UTC)");
    parse_cmd->add_option("--query-id", parse_id, "query_id to assign");

    // search
    auto* search_cmd = app.add_subcommand("search", "Run a query document");
    std::string search_query, search_system = "combined";
    std::size_t search_limit = 10;
    std::uint64_t search_seed = 0;
    IndexSource search_src;
    search_cmd->add_option("--query", search_query, "Query document JSON")->required();
    search_cmd->add_option("--limit", search_limit, "Number of results")->check(CLI::PositiveNumber);
    search_cmd->add_option("--system", search_system, "combined|structured|unstructured")
        ->check(CLI::IsMember({"combined", "structured", "unstructured"}));
    search_cmd->add_option("--seed", search_seed, "Sampling seed for --system structured");
    search_src.add_options(search_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Benchmark the three systems against ground truth");
    std::string eval_queries, eval_truth, eval_format = "json";
    std::uint64_t eval_seed = 0;
    std::size_t eval_k = 5;
    IndexSource eval_src;
    eval_cmd->add_option("--queries", eval_queries, "Directory of query documents")->required();
    eval_cmd->add_option("--truth", eval_truth, "Ground truth JSON Lines")->required();
    eval_cmd->add_option("--seed", eval_seed, "Corpus seed; also seeds the structured-only sample")->required();
    eval_cmd->add_option("--k", eval_k, "Cutoff for P@k")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--format", eval_format, "json|table")->check(CLI::IsMember({"json", "table"}));
    eval_src.add_options(eval_cmd);

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP API");
    const char* env_addr = std::getenv("CREATE_ADDR");
    std::string serve_addr = env_addr && *env_addr ? env_addr : "127.0.0.1:8080";
    std::string serve_judgments, serve_as_of;
    IndexSource serve_src;
    serve_cmd->add_option("--addr", serve_addr, "HOST:PORT (default: $CREATE_ADDR or 127.0.0.1:8080)");
    serve_cmd->add_option("--judgments", serve_judgments, "Judgment log (JSON Lines, appended)");
    serve_cmd->add_option("--as-of", serve_as_of, "Reference date for /api/parse");
    serve_src.add_options(serve_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    try {
        auto vocab = load_vocabulary(vocab_path);
        auto lexicon = triggers_path.empty() ? TriggerLexicon::defaults() : TriggerLexicon::load_tsv(triggers_path);

        if (*gen_cmd) {
            auto spec = load_generator_spec(spec_path);
            auto g = generate_synthetic_corpus(spec, gen_seed, vocab);
            write_corpus(g.corpus, out_dir);
            write_ground_truth(g.truth, fs::path(out_dir) / kTruthFile);
            std::cout << "persons " << g.corpus.persons.size() << "\nrecords " << g.corpus.records.size()
                      << "\ndocuments " << g.corpus.documents.size() << "\ntruth " << g.truth.size() << "\n";
        } else if (*index_cmd) {
            auto corpus = load_corpus(fs::path(index_corpus), vocab, lexicon);
            auto ix = build_index(corpus);
            const auto& r = corpus.report;
            std::cout << "persons " << r.persons << "\nrecords " << r.records << "\nunmapped_records "
                      << r.unmapped_records << "\ndocuments " << r.documents << "\nsections " << r.sections
                      << "\nmentions " << r.mentions << "\ntext_terms " << ix.text_postings().size()
                      << "\nconcepts " << ix.concept_postings().size() << "\n";
            if (!index_snapshot.empty())
                save_snapshot(ix, index_snapshot);
        } else if (*parse_cmd) {
            ParseOptions opts;
            opts.lexicon = &lexicon;
            if (!parse_as_of.empty())
                opts.as_of_date = Date::parse(parse_as_of);
            if (!parse_id.empty())
                opts.query_id = parse_id;
            std::cout << serialize_query(parse_query(parse_text, vocab, opts));
        } else if (*search_cmd) {
            auto q = deserialize_query(read_file(search_query));
            auto ix = search_src.load(vocab);
            auto system = *parse_system(search_system);
            if (system == SearchSystem::Structured) {
                for (const auto& id : structured_only_search(ix, vocab, q, search_limit, search_seed))
                    std::cout << id << "\n";
            } else {
                auto hits = system == SearchSystem::Combined ? search(ix, vocab, q, search_limit)
                                                             : unstructured_only_search(ix, vocab, q, search_limit);
                for (const auto& h : hits)
                    std::cout << h.person_id << "\t" << format_score(h.score) << "\n";
            }
        } else if (*eval_cmd) {
            auto queries = load_queries(eval_queries);
            auto truth = load_ground_truth(eval_truth);
            auto ix = eval_src.load(vocab);
            auto report = run_benchmark(ix, vocab, queries, truth, {eval_k, eval_seed, eval_seed});
            if (eval_format == "table")
                std::cout << format_table(report);
            else
                std::cout << to_json(report).dump(2) << "\n";
        } else if (*serve_cmd) {
            auto [host, port] = split_addr(serve_addr);
            auto ix = serve_src.load(vocab);
            std::optional<JudgmentStore> file_store;
            JudgmentStore memory_store;
            if (!serve_judgments.empty())
                file_store.emplace(fs::path(serve_judgments));
            JudgmentStore& store = file_store ? *file_store : memory_store;
            ServiceOptions opts;
            if (!serve_as_of.empty())
                opts.as_of_date = Date::parse(serve_as_of);
            Service service(ix, vocab, store, opts);
            httplib::Server server;
            bind_service(server, service);
            std::cerr << "listening on " << host << ":" << port << "\n";
            if (!server.listen(host, port)) {
                std::cerr << "error: cannot listen on " << serve_addr << "\n";
                return kDataError;
            }
        }
    } catch (const InvalidQueryError& e) {
        std::cerr << "error: " << e.what() << "\n";
        for (const auto& v : e.violations())
            std::cerr << "  " << v.code << " at " << (v.field_path.empty() ? "<root>" : v.field_path) << ": "
                      << v.message << "\n";
        return kDataError;
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDataError;
    }
    return 0;
}
