"""Smoke test for the `gda` extension module.

Build and run:

    cargo build --release -p gda-py --features extension-module
    cp target/release/libgda.so python/gda.so
    python3 python/smoke_test.py
"""

import os
import tempfile

import gda


def main():
    cases = gda.generate_synthetic_cases(12, seed=7)
    assert len(cases) == 12
    again = gda.generate_synthetic_cases(12, seed=7)
    assert [c.to_line() for c in cases] == [c.to_line() for c in again]
    back = gda.PatientCase.from_line(cases[0].to_line())
    assert back == cases[0]

    ref = gda.PatientCase.reference()
    assert gda.format_context_string(ref, 57.6) == "[CLS] 57.6 [SEP] 86 [SEP] 13.48 [SEP]"
    emb = gda.embed_case(ref, 57.6, dim=16, seed=4)
    assert len(emb) == 16 and emb == gda.embed_case(ref, 57.6, dim=16, seed=4)

    assert "IdiopathicShortStature" in gda.labels()
    assert gda.treatment_for("CentralPrecociousPuberty").startswith("Leuporelin")
    assert abs(gda.mae_in_months([10.0, 20.0], [12.0, 17.0]) - 2.5) < 1e-12

    twin = gda.PatientCase(
        "twin", "male", ref.age_months, ref.height_cm, ref.weight_kg,
        bone_age_months=57.6, diagnosis="IdiopathicShortStature",
    )
    prompt = gda.build_prompt([twin], ref)
    assert "Example 1 :" in prompt and "Case :" in prompt
    diagnosis, treatment = gda.mock_advice([twin], ref)
    assert diagnosis == "Idiopathic short stature", diagnosis
    assert treatment == gda.treatment_for("IdiopathicShortStature")

    try:
        gda.PatientCase("bad", "robot", 10.0, 70.0, 9.0)
    except ValueError as e:
        assert "robot" in str(e)
    else:
        raise AssertionError("invalid gender accepted")

    model = gda.BoneAgeModel(image_size=16, channels=[4, 8], seed=0)
    losses = model.train_synthetic(8, epochs=2, seed=0)
    assert len(losses) == 2
    img = gda.synthetic_hand_xray(100.0, 16, 3)
    pred = model.predict(img)
    assert pred == pred and 0.0 <= model.evaluate_synthetic(4)

    with tempfile.TemporaryDirectory() as d:
        ckpt = os.path.join(d, "m.ckpt")
        model.save(ckpt)
        assert gda.BoneAgeModel.load(ckpt).predict(img) == pred
        try:
            gda.BoneAgeModel.load(os.path.join(d, "missing.ckpt"))
        except OSError:
            pass
        else:
            raise AssertionError("missing checkpoint loaded")

        path = os.path.join(d, "cases.txt")
        gda.write_cases(path, cases)
        assert [c.case_id for c in gda.parse_cases(path)] == [c.case_id for c in cases]

        out = os.path.join(d, "run")
        code, stdout, stderr = gda.run_cli([
            "pipeline", "--synthetic", "30", "--seed", "3", "--k", "2", "--epochs", "2",
            "--boneage-images", "10", "--image-size", "16", "--out", out,
        ])
        assert code == 0, stderr
        assert "cases: 30" in stdout
        assert os.path.isfile(os.path.join(out, "curves.csv"))
        code, _, stderr = gda.run_cli(["pipeline", "--synthetic", "10", "--k", "0"])
        assert code == 3, stderr

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
