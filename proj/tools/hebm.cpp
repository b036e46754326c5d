#include <iostream>

#include "CLI11.hpp"
#include "hebm/cli.hpp"

int main(int argc, char** argv) {
  using namespace hebm::cli;
  CLI::App app{"Hybrid energy-based models: train, sample, evaluate, verify"};
  app.require_subcommand(1);

  TrainArgs train;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "Train a score model from a config and a dataset");
  t->add_option("--config", train.config, "key = value config file");
  t->add_option("--data", train.data, "dataset directory (overrides dataset.path)");
  t->add_option("--out", train.out, "output directory for model.ckpt, train.log, config.resolved")->required();
  t->add_flag("--no-statistic", train.no_statistic, "keep the statistic but freeze eta at zero");
  auto* train_seed_opt = t->add_option("--seed", train_seed, "seed (overrides HEBM_SEED and the config)");

  SampleArgs smp;
  std::uint64_t sample_seed = 0;
  auto* s = app.add_subcommand("sample", "Draw samples from a checkpoint");
  s->add_option("--ckpt", smp.ckpt, "checkpoint file")->required();
  s->add_option("--n", smp.n, "number of samples")->required();
  auto* sample_seed_opt = s->add_option("--seed", sample_seed, "sampler seed");
  s->add_option("--out", smp.out, "output dataset directory")->required();

  EvalArgs ev;
  std::uint64_t eval_seed = 0;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint against a dataset");
  e->add_option("--ckpt", ev.ckpt, "checkpoint file")->required();
  e->add_option("--data", ev.data, "reference dataset directory")->required();
  e->add_option("--metrics", ev.metrics, "delta_t, nll, validity, mmd, cov, 1nna")->delimiter(',')->expected(0, -1);
  e->add_option("--samples", ev.samples, "sample dataset directory (default: draw from the checkpoint)");
  e->add_option("--n", ev.n, "samples to draw when --samples is absent (default: dataset size)");
  auto* eval_seed_opt = e->add_option("--seed", eval_seed, "sampler seed");
  e->add_option("--out", ev.out, "file for metric records");

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Run built-in verification suites");
  v->add_option("--suite", ver.suite, "theorem1, gradcheck, knn, sampler, or all")
      ->check(CLI::IsMember({"theorem1", "gradcheck", "knn", "sampler", "all"}));
  v->add_flag("--inject-fault", ver.inject_fault, "negate analytic gradients (gradcheck must then fail)");
  v->add_option("--seed", ver.seed, "seed for random configurations");

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  g->add_option("--kind", gen.kind, "toy2d, margin_images, point_clouds, molecules")->required();
  g->add_option("--params", gen.params, "comma-separated key=value overrides");
  g->add_option("--seed", gen.seed, "generator seed");
  g->add_option("--out", gen.out, "output dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kUsage;
  }

  return guarded(
      [&]() -> int {
        if (*t) {
          if (*train_seed_opt) train.seed = train_seed;
          cmd_train(train, std::cout);
        } else if (*s) {
          if (*sample_seed_opt) smp.seed = sample_seed;
          cmd_sample(smp, std::cout);
        } else if (*e) {
          if (*eval_seed_opt) ev.seed = eval_seed;
          cmd_eval(ev, std::cout);
        } else if (*v) {
          return cmd_verify(ver, std::cout) ? kOk : kNumeric;
        } else if (*g) {
          cmd_gendata(gen, std::cout);
        }
        return kOk;
      },
      std::cerr);
}
