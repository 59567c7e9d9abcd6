//! Every example under `examples/` runs to completion.

mod calculus_report {
    include!("../examples/calculus_report.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod constant_ledger {
    include!("../examples/constant_ledger.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod epsilon_scaling {
    include!("../examples/epsilon_scaling.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod exact_calculus {
    include!("../examples/exact_calculus.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod mesh_tour {
    include!("../examples/mesh_tour.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod mollify_forms {
    include!("../examples/mollify_forms.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod smoothed_projection {
    include!("../examples/smoothed_projection.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod whitney_interpolation {
    include!("../examples/whitney_interpolation.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}
