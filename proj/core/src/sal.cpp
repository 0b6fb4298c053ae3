#include "msat/sal.hpp"

namespace msat {

Discriminator::Discriminator(int embed_dim, std::mt19937& rng) {
    hidden = LinearLayer("disc.hidden", embed_dim, kHiddenDim, rng);
    out = LinearLayer("disc.out", kHiddenDim, 1, rng);
}

Tensor Discriminator::forward(const Tensor& x) const {
    return sigmoid(out.forward(relu(hidden.forward(x))));
}

ParamRefs Discriminator::parameters() {
    ParamRefs refs;
    hidden.collect(refs);
    out.collect(refs);
    return refs;
}

Classifier::Classifier(int embed_dim, int num_classes, std::mt19937& rng) {
    MSAT_REQUIRE(num_classes >= 2, "classifier: need at least 2 classes");
    proj = LinearLayer("classifier.proj", embed_dim, num_classes, rng);
}

Tensor Classifier::forward(const Tensor& x) const { return proj.forward(x); }

ParamRefs Classifier::parameters() {
    ParamRefs refs;
    proj.collect(refs);
    return refs;
}

Tensor classification_loss(const Tensor& logits, const std::vector<int>& labels) {
    MSAT_REQUIRE(logits.rank() == 2, "classification_loss: logits must be [N,K], got ",
                 shape_str(logits.shape()));
    MSAT_REQUIRE(static_cast<int>(labels.size()) == logits.dim(0),
                 "classification_loss: ", labels.size(), " labels for ", logits.dim(0),
                 " rows");
    return mean_all(sub(log_sum_exp(logits, 1), take_per_row(logits, labels)));
}

namespace {

Tensor mean_log_prob(const Tensor& probs, float eps) {
    return mean_all(log(clamp(probs, eps, 1.0f - eps)));
}

}  // namespace

Tensor discriminator_loss(const Tensor& codes, const Tensor& fused, const Discriminator& disc,
                          float eps) {
    MSAT_REQUIRE(codes.rank() == 2 && fused.rank() == 2 && codes.dim(1) == fused.dim(1),
                 "discriminator_loss: dimension mismatch ", shape_str(codes.shape()), " vs ",
                 shape_str(fused.shape()));
    const Tensor real_term = mean_log_prob(disc.forward(codes), eps);
    const Tensor fake = affine(disc.forward(detach(fused)), -1.0f, 1.0f);  // 1 - D(fused)
    const Tensor fake_term = mean_log_prob(fake, eps);
    return affine(add(real_term, fake_term), -1.0f, 0.0f);
}

Tensor generator_loss(const Tensor& fused, const Discriminator& disc, float eps) {
    MSAT_REQUIRE(fused.rank() == 2, "generator_loss: fused batch must be [N,D], got ",
                 shape_str(fused.shape()));
    return affine(mean_log_prob(disc.forward(fused), eps), -1.0f, 0.0f);
}

LossReport sal_step(const SnippetBatch& batch, SalContext& ctx) {
    MSAT_REQUIRE(ctx.generator && ctx.classifier && ctx.discriminator && ctx.encoder,
                 "sal_step: incomplete context");
    MSAT_REQUIRE(ctx.encoder->frozen(), "sal_step: semantic encoder must be frozen");
    MSAT_REQUIRE(ctx.lambda_adv >= 0.0f, "sal_step: lambda_adv must be non-negative");

    Tape& tape = Tape::current();
    const ParamRefs d_params = ctx.discriminator->parameters();
    ParamRefs gc_params = ctx.generator->parameters();
    for (Parameter* p : ctx.classifier->parameters()) gc_params.push_back(p);

    LossReport report;
    report.lambda_adv = ctx.lambda_adv;

    // Phase 1: discriminator learns to score codes 1 and embeddings 0.
    {
        tape.clear();
        const Tensor fused = ctx.generator->forward(batch.data, batch.num_segments);
        const Tensor codes = ctx.encoder->encode_batch(batch.labels);
        const Tensor d_loss = discriminator_loss(codes, fused, *ctx.discriminator,
                                                 ctx.eps_clamp);
        zero_grad(d_params);
        tape.backward(d_loss);
        adam_step(d_params, ctx.lr_discriminator);
        report.adv_d = d_loss.item();
    }

    // Phase 2: generator and classifier minimize classification loss plus
    // the weighted non-saturating adversarial term.
    {
        tape.clear();
        const Tensor fused = ctx.generator->forward(batch.data, batch.num_segments);
        const Tensor logits = ctx.classifier->forward(fused);
        const Tensor cls = classification_loss(logits, batch.labels);
        Tensor total = cls;
        if (ctx.lambda_adv > 0.0f) {
            const Tensor adv = generator_loss(fused, *ctx.discriminator, ctx.eps_clamp);
            total = add(cls, affine(adv, ctx.lambda_adv, 0.0f));
            report.adv_g = adv.item();
        }
        zero_grad(gc_params);
        tape.backward(total);
        clip_gradients(gc_params, ctx.grad_clip);
        sgd_step(gc_params, ctx.lr_generator, ctx.momentum);
        report.cls = cls.item();
        report.total = total.item();
    }
    tape.clear();
    return report;
}

}  // namespace msat
